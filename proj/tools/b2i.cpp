#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "b2i/byte2image.hpp"
#include "b2i/checkpoint.hpp"
#include "b2i/corpus.hpp"
#include "b2i/metrics.hpp"
#include "b2i/model.hpp"
#include "b2i/train.hpp"

namespace {

using namespace b2i;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::numeric:
      return 3;
    case ErrorKind::length:
    case ErrorKind::shape:
    case ErrorKind::label:
    case ErrorKind::ingestion:
    case ErrorKind::checkpoint:
    case ErrorKind::split:
    case ErrorKind::evaluation:
      return 2;
    default:
      return 1;
  }
}

std::size_t worker_count(std::size_t flag) {
  if (const char* env = std::getenv("B2I_THREADS"); env && *env) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("B2I_THREADS must be a positive integer, got '") + env + "'");
  }
  return std::max<std::size_t>(1, flag);
}

std::vector<std::size_t> parse_channels(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stoul(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("channels: bad entry '" + tok + "'");
    }
  }
  if (out.empty()) throw ConfigError("channels: empty list");
  return out;
}

/// key = value lines, '#' comments.
std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::map<std::string, std::string> kv;
  std::size_t line_no = 0;
  for (std::string line; std::getline(f, line);) {
    ++line_no;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    kv[detail::trim(std::string_view(line).substr(0, eq))] =
        detail::trim(std::string_view(line).substr(eq + 1));
  }
  return kv;
}

// ---------------------------------------------------------------- gen-corpus

struct GenArgs {
  std::string spec;
  std::string out;
  std::size_t threads = 1;
};

int cmd_gen_corpus(const GenArgs& a) {
  const SynthSpec spec = parse_synth_spec(read_text_file(a.spec));
  const Corpus corpus = generate(spec, worker_count(a.threads));
  const Manifest m = write_corpus(corpus, spec, a.out);
  std::size_t counts[3] = {};
  for (const auto& e : m.entries) ++counts[static_cast<int>(*e.split)];
  std::cout << "classes=" << m.labels.size() << " entries=" << m.entries.size()
            << " train=" << counts[0] << " val=" << counts[1] << " test=" << counts[2]
            << " manifest=" << (fs::path(a.out) / "manifest.tsv").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- index

struct IndexArgs {
  std::string file;
  std::string label;
  std::string out;
  std::uint64_t sector_len = kSmallSector;
  std::uint64_t stride = 0;
};

int cmd_index(const IndexArgs& a) {
  if (!is_sector_length(a.sector_len)) throw ConfigError("sector length must be 512 or 4096");
  Manifest m = index_file(a.file, a.label, a.sector_len, a.stride);
  for (auto& e : m.entries) e.path = fs::absolute(e.path).string();
  write_manifest(m, a.out);
  std::cout << "entries=" << m.entries.size() << "\n";
  return 0;
}

// ---------------------------------------------------------------- convert

std::vector<std::uint8_t> read_range(const std::string& path, std::uint64_t offset,
                                     std::uint64_t length) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IngestionError("cannot open " + path);
  f.seekg(static_cast<std::streamoff>(offset));
  std::vector<std::uint8_t> buf(length);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(length));
  if (!f || static_cast<std::uint64_t>(f.gcount()) != length) {
    throw IngestionError(path + ": short read, wanted " + std::to_string(length) +
                         " bytes at offset " + std::to_string(offset));
  }
  return buf;
}

struct ConvertArgs {
  std::string input;
  std::uint64_t offset = 0;
  std::uint64_t sector_len = 0;
  std::size_t n = kDefaultNgram;
  std::string out;
};

int cmd_convert(const ConvertArgs& a) {
  std::uint64_t len = a.sector_len;
  if (len == 0) {
    std::error_code ec;
    const auto size = fs::file_size(a.input, ec);
    if (ec) throw IngestionError("cannot stat " + a.input);
    len = size >= a.offset && size - a.offset == kLargeSector ? kLargeSector : kSmallSector;
  }
  const Sector sector(read_range(a.input, a.offset, len));
  const NGramImage im = convert(sector, a.n);
  fs::path out(a.out);
  if (im.channels() == 1) {
    write_file(out, export_pgm(im, 0));
    std::cout << "wrote=" << out.string() << "\n";
  } else {
    const fs::path stem = out.parent_path() / out.stem();
    for (std::size_t c = 0; c < im.channels(); ++c) {
      const fs::path p = stem.string() + "_c" + std::to_string(c) + ".pgm";
      write_file(p, export_pgm(im, c));
      std::cout << "wrote=" << p.string() << "\n";
    }
  }
  std::cout << "height=" << im.height() << " width=" << im.width()
            << " channels=" << im.channels() << "\n";
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string manifest;
  std::string out;
  std::string config;
  std::string resume;
  std::string log;
  std::string precision = "f32";
  std::map<std::string, std::string> flags;  // explicit overrides, config-file keys
  std::size_t threads = 1;
};

struct Datasets {
  Manifest manifest;
  Dataset train, val, test;
  std::size_t sector_len = 0;
};

Datasets load_datasets(const std::string& path, std::uint64_t split_seed) {
  Datasets d;
  d.manifest = read_manifest(path);
  if (d.manifest.entries.empty()) throw IngestionError("manifest has no entries");
  d.sector_len = d.manifest.entries.front().length;
  for (const auto& e : d.manifest.entries) {
    if (e.length != d.sector_len) {
      throw ConfigError("manifest mixes sector lengths " + std::to_string(d.sector_len) +
                        " and " + std::to_string(e.length));
    }
  }
  if (!d.manifest.has_splits()) {
    d.manifest = assign_splits(d.manifest, {0.8, 0.1, 0.1}, split_seed);
  }
  validate_manifest(d.manifest);
  d.train = to_dataset(slice_files(d.manifest.subset(Split::train)));
  d.val = to_dataset(slice_files(d.manifest.subset(Split::val)));
  d.test = to_dataset(slice_files(d.manifest.subset(Split::test)));
  return d;
}

void apply_settings(const std::map<std::string, std::string>& kv, ModelConfig& mc,
                    TrainConfig& tc, std::optional<std::size_t>& num_classes) {
  auto as_size = [](const std::string& k, const std::string& v) {
    return detail::parse_uint<std::size_t, ConfigError>(v, "setting '" + k + "'");
  };
  auto as_double = [](const std::string& k, const std::string& v) {
    return detail::parse_double<ConfigError>(v, "setting '" + k + "'");
  };
  for (const auto& [k, v] : kv) {
    if (k == "epochs") tc.epochs = as_size(k, v);
    else if (k == "batch") tc.batch_size = as_size(k, v);
    else if (k == "lr") tc.peak_lr = as_double(k, v);
    else if (k == "warmup_epochs") tc.warmup_epochs = as_size(k, v);
    else if (k == "weight_decay") tc.adamw.weight_decay = as_double(k, v);
    else if (k == "seed") tc.seed = as_size(k, v);
    else if (k == "augment") {
      if (v != "true" && v != "false") throw ConfigError("setting 'augment': expected true or false");
      tc.augment = v == "true";
    } else if (k == "ngram") mc.ngram = as_size(k, v);
    else if (k == "embed_count") mc.embed_count = as_size(k, v);
    else if (k == "byte_dim") mc.byte_dim = as_size(k, v);
    else if (k == "channels") mc.channels = parse_channels(v);
    else if (k == "branches") mc.branches = parse_branches(v);
    else if (k == "num_classes") num_classes = as_size(k, v);
    else throw ConfigError("unknown setting '" + k + "'");
  }
}

template <typename T>
int run_train(const TrainArgs& a) {
  ModelConfig mc;
  TrainConfig tc;
  std::optional<std::size_t> declared_classes;
  if (!a.config.empty()) apply_settings(read_config_file(a.config), mc, tc, declared_classes);
  apply_settings(a.flags, mc, tc, declared_classes);
  tc.workers = worker_count(a.threads);

  std::optional<CheckpointData> resume;
  if (!a.resume.empty()) {
    resume = load_checkpoint(a.resume);
    if (!resume->training.contains("config")) {
      throw CheckpointError("checkpoint carries no training state to resume");
    }
    tc = train_config_from_json(resume->training.at("config"), tc);
  }
  Datasets data = load_datasets(a.manifest, tc.seed);
  mc.sector_len = data.sector_len;
  mc.num_classes = data.manifest.labels.size();
  if (declared_classes && *declared_classes != mc.num_classes) {
    throw ConfigError("config declares " + std::to_string(*declared_classes) +
                      " classes, manifest has " + std::to_string(mc.num_classes));
  }
  mc.validate();
  tc.validate();

  std::ofstream log_file;
  if (!a.log.empty()) {
    log_file.open(a.log, std::ios::app);
    if (!log_file) throw ConfigError("cannot open log file " + a.log);
  }
  auto emit = [&](const std::string& line) {
    std::cout << line << std::endl;
    if (log_file) log_file << line << std::endl;
  };

  TrainState<T> st = [&] {
    if (!resume) return fresh_state<T>(mc, tc);
    if (resume->labels != data.manifest.labels) {
      throw ConfigError("checkpoint labels do not match the manifest label table");
    }
    if (resume->dtype != dtype_name<T>()) {
      throw ConfigError("checkpoint precision is " + resume->dtype + ", run asked for " +
                        dtype_name<T>());
    }
    return resume_state<T>(*resume, tc);
  }();
  const ModelConfig& cfg = st.model.config();
  emit("event=start precision=" + std::string(dtype_name<T>()) +
       " classes=" + std::to_string(cfg.num_classes) +
       " train=" + std::to_string(data.train.size()) +
       " val=" + std::to_string(data.val.size()) +
       " epochs=" + std::to_string(tc.epochs) + " batch=" + std::to_string(tc.batch_size) +
       " lr=" + detail::fixed(tc.peak_lr, 6) + " branches=" + to_string(cfg.branches) +
       " resume_epoch=" + std::to_string(st.epochs_done));

  TrainOutputs out;
  out.checkpoint = fs::path(a.out);
  out.labels = data.manifest.labels;
  out.on_epoch = [&](const EpochLog& e) { emit(format_log(e)); };
  train(st, tc, data.train, data.val, out);
  emit("event=done epochs=" + std::to_string(st.epochs_done) +
       " best_val=" + detail::fixed(st.best_val, 6) + " checkpoint=" + a.out);
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string manifest;
  std::string checkpoint;
  std::string split = "test";
  std::string target;
  std::string out;
  std::size_t threads = 1;
};

template <typename T>
int run_eval(const EvalArgs& a, const CheckpointData& ck) {
  Manifest m = read_manifest(a.manifest);
  if (ck.config.num_classes != m.labels.size()) {
    throw ConfigError("checkpoint has " + std::to_string(ck.config.num_classes) +
                      " classes, manifest has " + std::to_string(m.labels.size()));
  }
  if (ck.labels != m.labels) throw ConfigError("checkpoint and manifest label names differ");
  if (a.split != "all") {
    if (!m.has_splits()) throw SplitError("manifest has no split column; use --split all");
    const Split s = a.split == "train" ? Split::train : a.split == "val" ? Split::val : Split::test;
    m = m.subset(s);
  }
  validate_manifest(m);
  Dataset data = to_dataset(slice_files(m));
  FusionModel<T> model = restore_model<T>(ck);
  const ConfusionMatrix cm = evaluate(model, data, 128, worker_count(a.threads));
  std::optional<std::size_t> target;
  if (!a.target.empty()) {
    const auto idx = m.label_index(a.target);
    if (!idx) throw LabelError("unknown target class '" + a.target + "'");
    target = *idx;
  }
  const MetricsReport r = report(cm, target);
  std::cout << render_table(cm, r, m.labels);
  if (!a.out.empty()) write_file(a.out, render_kv(cm, r, m.labels));
  return 0;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  std::string file;
  std::uint64_t offset = 0;
  std::string checkpoint;
  std::size_t top_k = 0;
};

template <typename T>
int run_predict(const PredictArgs& a, const CheckpointData& ck) {
  FusionModel<T> model = restore_model<T>(ck);
  const auto bytes = read_range(a.file, a.offset, ck.config.sector_len);
  const std::span<const std::uint8_t> one(bytes);
  const Tensor<T> p = model.probabilities(make_input<T>(ck.config, std::span(&one, 1)));
  std::vector<std::size_t> order(p.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return p[x] > p[y]; });
  const std::size_t k = a.top_k ? std::min(a.top_k, order.size()) : order.size();
  std::cout << "predicted=" << ck.labels[order[0]] << "\n";
  for (std::size_t r = 0; r < k; ++r) {
    std::cout << "rank=" << r + 1 << " label=" << ck.labels[order[r]]
              << " prob=" << detail::fixed(static_cast<double>(p[order[r]]), 6) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- inspect

int cmd_inspect(const std::string& path) {
  const CheckpointData ck = load_checkpoint(path);
  FusionModel<double> model = restore_model<double>(ck);
  const ModelConfig& c = ck.config;
  std::cout << "format_version=" << ck.format_version << "\n"
            << "dtype=" << ck.dtype << "\n"
            << "sector_len=" << c.sector_len << "\n"
            << "ngram=" << c.ngram << "\n"
            << "input_channels=" << c.input_channels() << "\n"
            << "image=" << c.image_height() << "x" << c.image_width() << "\n"
            << "embed_count=" << c.embed_count << "\n"
            << "byte_dim=" << c.byte_dim << "\n"
            << "channels=";
  for (std::size_t i = 0; i < c.channels.size(); ++i) std::cout << (i ? "," : "") << c.channels[i];
  std::cout << "\nbranches=" << to_string(c.branches) << "\n"
            << "num_classes=" << c.num_classes << "\n"
            << "labels=";
  for (std::size_t i = 0; i < ck.labels.size(); ++i) std::cout << (i ? "," : "") << ck.labels[i];
  std::cout << "\n";

  std::map<std::string, std::size_t> groups{{"byte_branch", 0}, {"embedding", 0},
                                            {"backbone", 0}, {"head", 0}};
  std::size_t total = 0;
  for (const auto& p : model.parameters()) {
    const std::size_t n = p.tensor->size();
    total += n;
    const std::string g = p.name.starts_with("byte.")    ? "byte_branch"
                          : p.name.starts_with("embed.") ? "embedding"
                          : p.name.starts_with("conv")   ? "backbone"
                                                         : "head";
    groups[g] += n;
    std::cout << "tensor." << p.name << "=" << shape_string(p.tensor->shape()) << "\n";
  }
  for (const char* g : {"byte_branch", "embedding", "backbone", "head"})
    std::cout << "params." << g << "=" << groups[g] << "\n";
  std::cout << "params.total=" << total << "\n";
  std::cout << "optimizer_steps=" << ck.optimizer_steps << "\n";
  for (const auto& [k, v] : ck.training.items()) std::cout << "training." << k << "=" << v.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sector to n-gram image conversion and fusion classifier"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-corpus", "generate a synthetic labeled corpus");
  g->add_option("--spec", gen.spec, "synthetic corpus spec file")->required();
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--threads", gen.threads, "worker threads");

  IndexArgs idx;
  auto* ix = app.add_subcommand("index", "cut a file into labeled sectors (manifest)");
  ix->add_option("--file", idx.file)->required();
  ix->add_option("--label", idx.label)->required();
  ix->add_option("--out", idx.out, "manifest path")->required();
  ix->add_option("--sector-len", idx.sector_len);
  ix->add_option("--stride", idx.stride, "bytes between sector starts (default: sector length)");

  ConvertArgs conv;
  auto* cv = app.add_subcommand("convert", "convert one sector to PGM image(s)");
  cv->add_option("input", conv.input)->required();
  cv->add_option("--offset", conv.offset);
  cv->add_option("--sector-len", conv.sector_len,
                 "512 or 4096 (default: 4096 if exactly 4096 bytes remain, else 512)");
  cv->add_option("--n", conv.n, "n-gram order");
  cv->add_option("--out", conv.out, "PGM path; 8-channel images get _c<k> suffixes")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a classifier");
  t->add_option("--manifest", tr.manifest)->required();
  t->add_option("--out", tr.out, "checkpoint path (best-val copy at <out>.best)")->required();
  t->add_option("--config", tr.config, "key=value settings file");
  t->add_option("--resume", tr.resume, "checkpoint to continue from");
  t->add_option("--log", tr.log, "append log lines to this file");
  t->add_option("--precision", tr.precision)->check(CLI::IsMember({"f32", "f64"}));
  t->add_option("--threads", tr.threads, "data preparation workers");
  std::map<std::string, std::string> flag_values;
  for (const auto& [flag, key] : std::vector<std::pair<std::string, std::string>>{
           {"--epochs", "epochs"}, {"--batch", "batch"}, {"--lr", "lr"},
           {"--warmup-epochs", "warmup_epochs"}, {"--weight-decay", "weight_decay"},
           {"--seed", "seed"}, {"--augment", "augment"}, {"--ngram", "ngram"},
           {"--embed-count", "embed_count"}, {"--byte-dim", "byte_dim"},
           {"--channels", "channels"}, {"--branches", "branches"}}) {
    t->add_option(flag, flag_values[key]);
  }

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint");
  e->add_option("--manifest", ev.manifest)->required();
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--split", ev.split)->check(CLI::IsMember({"train", "val", "test", "all"}));
  e->add_option("--target-class", ev.target, "report this class separately");
  e->add_option("--out", ev.out, "key=value metrics file");
  e->add_option("--threads", ev.threads);

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "classify one sector");
  p->add_option("file", pr.file)->required();
  p->add_option("--offset", pr.offset);
  p->add_option("--checkpoint", pr.checkpoint)->required();
  p->add_option("--top-k", pr.top_k, "number of classes to list (default all)");

  std::string inspect_path;
  auto* in = app.add_subcommand("inspect", "summarize a checkpoint");
  in->add_option("checkpoint", inspect_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*g) return cmd_gen_corpus(gen);
    if (*ix) return cmd_index(idx);
    if (*cv) return cmd_convert(conv);
    if (*t) {
      for (const auto& [k, v] : flag_values)
        if (!v.empty()) tr.flags[k] = v;
      return tr.precision == "f64" ? run_train<double>(tr) : run_train<float>(tr);
    }
    if (*e) {
      const CheckpointData ck = load_checkpoint(ev.checkpoint);
      return ck.dtype == "f64" ? run_eval<double>(ev, ck) : run_eval<float>(ev, ck);
    }
    if (*p) {
      const CheckpointData ck = load_checkpoint(pr.checkpoint);
      return ck.dtype == "f64" ? run_predict<double>(pr, ck) : run_predict<float>(pr, ck);
    }
    if (*in) return cmd_inspect(inspect_path);
  } catch (const Error& err) {
    std::cerr << "b2i: " << to_string(err.kind()) << ": " << err.what() << "\n";
    return exit_code(err.kind());
  } catch (const std::exception& err) {
    std::cerr << "b2i: " << err.what() << "\n";
    return 1;
  }
  return 1;
}
