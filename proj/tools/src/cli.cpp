#include "unifex/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>

#include "CLI11.hpp"
#include "json.hpp"
#include "unifex/checkpoint.hpp"
#include "unifex/curation.hpp"
#include "unifex/data_model.hpp"
#include "unifex/error.hpp"
#include "unifex/losses.hpp"
#include "unifex/optim.hpp"
#include "unifex/probe.hpp"
#include "unifex/retrieval.hpp"

#ifndef UNIFEX_VERSION
#define UNIFEX_VERSION "unknown"
#endif

namespace unifex::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class UsageError : public Error {
 public:
  using Error::Error;
};

// Option values are validated before any work starts; a ConfigError there is a usage error.
template <typename F>
auto as_usage(F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const DataError*>(&e)) return "data";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  return "internal";
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// "<embeddings>:<manifest>". The split point is the first ':' whose left side is an existing file,
/// so paths containing ':' still work as long as the embeddings file exists.
struct DataPair {
  std::string embeddings;
  std::string manifest;
};

std::optional<DataPair> split_pair(const std::string& text) {
  std::optional<DataPair> fallback;
  for (std::size_t pos = text.find(':'); pos != std::string::npos; pos = text.find(':', pos + 1)) {
    DataPair p{text.substr(0, pos), text.substr(pos + 1)};
    if (p.embeddings.empty() || p.manifest.empty()) continue;
    if (fs::is_regular_file(p.embeddings) && fs::is_regular_file(p.manifest)) return p;
    if (!fallback) fallback = p;
  }
  return fallback;
}

const CLI::Validator kPairOfFiles(
    [](std::string& text) -> std::string {
      const auto p = split_pair(text);
      if (!p) return "expected <embeddings.emb>:<manifest.tsv>, got '" + text + "'";
      for (const auto& f : {p->embeddings, p->manifest}) {
        if (!fs::is_regular_file(f)) return "file does not exist: " + f;
      }
      return {};
    },
    "EMB:TSV", "pair of existing files");

struct LoadedSet {
  EmbeddingMatrix embeddings;
  DatasetManifest manifest;
};

LoadedSet load_pair(const std::string& text) {
  const auto p = split_pair(text);
  if (!p) throw UsageError("expected <embeddings.emb>:<manifest.tsv>, got '" + text + "'");
  LoadedSet s{load_embeddings(p->embeddings), load_manifest(p->manifest)};
  check_paired(s.embeddings, s.manifest);
  return s;
}

void make_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

struct RunContext {
  std::string subcommand;
  const std::vector<std::string>* args = nullptr;
  std::ostream* out = nullptr;
};

void print_config(const RunContext& ctx, const json& config) {
  *ctx.out << "unifex " << ctx.subcommand << " resolved config:\n" << config.dump(2) << "\n";
}

void write_run_json(const RunContext& ctx, const fs::path& dir, const json& config, const json& metrics) {
  json j;
  j["tool"] = "unifex";
  j["versions"] = {{"unifex", UNIFEX_VERSION}, {"compiler", __VERSION__}};
  j["subcommand"] = ctx.subcommand;
  j["argv"] = *ctx.args;
  j["seed"] = config.contains("seed") ? config["seed"] : json(nullptr);
  if (config.contains("loss")) j["loss_variant"] = config["loss"]["variant"];
  j["config"] = config;
  j["metrics"] = metrics;
  j["created_utc"] = utc_timestamp();
  write_text(dir / "run.json", j.dump(2) + "\n");
}

json loss_json(const LossConfig& l) {
  return {{"variant", std::string(to_string(l.variant))},
          {"m", l.m},
          {"s", l.s},
          {"k", l.k},
          {"m_min", l.m_min},
          {"m_max", l.m_max},
          {"curricular_alpha", l.curricular_alpha},
          {"adaface_h", l.adaface_h},
          {"adaface_ema", l.adaface_ema},
          {"adaface_eps", l.adaface_eps},
          {"adacos_dynamic", l.adacos_dynamic}};
}

json metrics_json(const EvalResult& r) {
  const std::string k = std::to_string(r.k);
  json j{{"k", r.k},
         {"mMP@" + k, r.mmp_at_k},
         {"mAP@" + k, r.map_at_k},
         {"scored_queries", r.scored_queries},
         {"excluded_queries", r.excluded_queries}};
  json domains = json::object();
  for (const auto& d : r.per_domain) {
    domains[d.domain] = {{"queries", d.queries}, {"mMP@" + k, d.mmp_at_k}, {"mAP@" + k, d.map_at_k}};
  }
  j["per_domain"] = domains;
  return j;
}

std::string class_map_tsv(const std::unordered_map<ClassId, ClassId>& mapping) {
  std::vector<std::pair<ClassId, ClassId>> rows;
  for (const auto& [old_id, new_id] : mapping) rows.emplace_back(new_id, old_id);
  std::sort(rows.begin(), rows.end());
  std::ostringstream s;
  s << "new_class_id\toriginal_class_id\n";
  for (const auto& [new_id, old_id] : rows) s << new_id << '\t' << old_id << '\n';
  return s.str();
}

// ---- curate ----

struct CurateOptions {
  std::string manifest;
  std::string embeddings;
  std::size_t min_samples = 3;
  std::size_t max_samples = 100;
  std::optional<std::size_t> class_budget;
  std::optional<std::size_t> subset_cap;
  std::uint64_t seed = 0;
  std::string out;
};

void add_curate(CLI::App& app, CurateOptions& o) {
  app.add_option("--manifest", o.manifest, "input manifest (TSV)")->required()->check(CLI::ExistingFile);
  app.add_option("--embeddings", o.embeddings, "paired EMB1 file, subset alongside the manifest")
      ->check(CLI::ExistingFile);
  app.add_option("--min-samples", o.min_samples, "drop classes with fewer samples")->capture_default_str();
  app.add_option("--max-samples", o.max_samples, "cap on samples per class")->capture_default_str();
  app.add_option("--class-budget", o.class_budget, "number of classes to keep");
  app.add_option("--subset-cap", o.subset_cap, "per-class cap applied with --class-budget");
  app.add_option("--seed", o.seed)->capture_default_str();
  app.add_option("--out", o.out, "output directory")->required();
}

int run_curate(const CurateOptions& o, const RunContext& ctx) {
  CurationConfig cfg;
  cfg.min_samples_per_class = o.min_samples;
  cfg.max_samples_per_class = o.max_samples;
  cfg.class_budget = o.class_budget;
  cfg.per_class_cap_for_subset = o.subset_cap;
  cfg.seed = o.seed;
  as_usage([&] { cfg.validate(); });
  if (o.subset_cap && !o.class_budget) throw UsageError("--subset-cap requires --class-budget");

  json config{{"manifest", o.manifest},
              {"embeddings", o.embeddings.empty() ? json(nullptr) : json(o.embeddings)},
              {"min_samples", cfg.min_samples_per_class},
              {"max_samples", cfg.max_samples_per_class},
              {"class_budget", o.class_budget ? json(*o.class_budget) : json(nullptr)},
              {"subset_cap", o.subset_cap ? json(*o.subset_cap) : json(nullptr)},
              {"seed", cfg.seed},
              {"out", o.out}};
  print_config(ctx, config);

  const DatasetManifest input = load_manifest(o.manifest);
  std::optional<EmbeddingMatrix> embeddings;
  if (!o.embeddings.empty()) {
    embeddings = load_embeddings(o.embeddings);
    check_paired(*embeddings, input);
  }
  const CurationResult result = curate(input, cfg);

  const fs::path dir = o.out;
  make_output_dir(dir);
  save_manifest(result.manifest, dir / "manifest.tsv");
  if (embeddings) save_embeddings(embeddings->select_rows(result.kept_rows), dir / "embeddings.emb");
  write_text(dir / "class_map.tsv", class_map_tsv(result.mapping));

  const ClassStats in_stats = ClassStats::from_manifest(input);
  const ClassStats out_stats = ClassStats::from_manifest(result.manifest);
  const auto nonempty = [](const ClassStats& s) {
    return static_cast<std::size_t>(std::count_if(s.counts.begin(), s.counts.end(), [](auto n) { return n > 0; }));
  };
  json metrics{{"input_records", input.size()},
               {"input_classes", nonempty(in_stats)},
               {"output_records", result.manifest.size()},
               {"output_classes", result.mapping.size()},
               {"n_min", out_stats.n_min},
               {"n_max", out_stats.n_max}};
  *ctx.out << "kept " << result.manifest.size() << " of " << input.size() << " records in " << result.mapping.size()
           << " classes\n";
  write_run_json(ctx, dir, config, metrics);
  return kExitOk;
}

// ---- train ----

struct TrainOptions {
  std::string embeddings;
  std::string manifest;
  std::string val_index;
  std::string val_queries;
  std::string loss = "arcface";
  LossConfig loss_cfg;
  bool adacos_fixed = false;
  TrainerConfig trainer;
  double dropout = 0.2;
  std::string out;
};

void add_train(CLI::App& app, TrainOptions& o) {
  app.add_option("--embeddings", o.embeddings, "training embeddings (EMB1)")->required()->check(CLI::ExistingFile);
  app.add_option("--manifest", o.manifest, "manifest paired with --embeddings; train-split rows are used")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--val-index", o.val_index, "validation index set for best-epoch selection")->check(kPairOfFiles);
  app.add_option("--val-queries", o.val_queries, "validation query set")->check(kPairOfFiles);
  app.add_option("--loss", o.loss,
                 "arcface, subcenter-arcface, li-arcface, adacos, curricularface, adaface or dynmargin-arcface")
      ->capture_default_str();
  app.add_option("--m", o.loss_cfg.m, "angular margin (radians)")->capture_default_str();
  app.add_option("--s", o.loss_cfg.s, "logit scale")->capture_default_str();
  app.add_option("--k", o.loss_cfg.k, "sub-centers per class")->capture_default_str();
  app.add_option("--m-min", o.loss_cfg.m_min)->capture_default_str();
  app.add_option("--m-max", o.loss_cfg.m_max)->capture_default_str();
  app.add_option("--curricular-alpha", o.loss_cfg.curricular_alpha)->capture_default_str();
  app.add_option("--adaface-h", o.loss_cfg.adaface_h)->capture_default_str();
  app.add_option("--adaface-ema", o.loss_cfg.adaface_ema)->capture_default_str();
  app.add_option("--adaface-eps", o.loss_cfg.adaface_eps)->capture_default_str();
  app.add_flag("--adacos-fixed", o.adacos_fixed, "keep the AdaCos scale at its initial value");
  app.add_option("--epochs", o.trainer.epochs)->capture_default_str();
  app.add_option("--batch", o.trainer.batch_size)->capture_default_str();
  app.add_option("--lr", o.trainer.lr)->capture_default_str();
  app.add_option("--lr-min", o.trainer.lr_min)->capture_default_str();
  app.add_option("--weight-decay", o.trainer.weight_decay)->capture_default_str();
  app.add_option("--warmup", o.trainer.warmup_epochs, "warmup epochs")->capture_default_str();
  app.add_option("--beta1", o.trainer.beta1)->capture_default_str();
  app.add_option("--beta2", o.trainer.beta2)->capture_default_str();
  app.add_option("--adam-eps", o.trainer.adam_eps)->capture_default_str();
  app.add_option("--max-seen-samples", o.trainer.max_seen_samples, "stop after this many training samples");
  app.add_option("--dropout", o.dropout)->capture_default_str();
  app.add_option("--seed", o.trainer.seed)->capture_default_str();
  app.add_option("--out", o.out, "output directory")->required();
}

int run_train(TrainOptions o, const RunContext& ctx) {
  o.loss_cfg.variant = as_usage([&] { return parse_loss_variant(o.loss); });
  o.loss_cfg.adacos_dynamic = !o.adacos_fixed;
  as_usage([&] {
    o.loss_cfg.validate();
    o.trainer.validate();
  });
  if (!(o.dropout >= 0.0 && o.dropout < 1.0)) throw UsageError("--dropout must be in [0, 1)");
  if (o.val_index.empty() != o.val_queries.empty()) throw UsageError("--val-index and --val-queries go together");

  const auto& t = o.trainer;
  json config{{"embeddings", o.embeddings},
              {"manifest", o.manifest},
              {"val_index", o.val_index.empty() ? json(nullptr) : json(o.val_index)},
              {"val_queries", o.val_queries.empty() ? json(nullptr) : json(o.val_queries)},
              {"loss", loss_json(o.loss_cfg)},
              {"dropout", o.dropout},
              {"epochs", t.epochs},
              {"batch", t.batch_size},
              {"lr", t.lr},
              {"lr_min", t.lr_min},
              {"weight_decay", t.weight_decay},
              {"warmup", t.warmup_epochs},
              {"beta1", t.beta1},
              {"beta2", t.beta2},
              {"adam_eps", t.adam_eps},
              {"max_seen_samples", t.max_seen_samples ? json(*t.max_seen_samples) : json(nullptr)},
              {"seed", t.seed},
              {"out", o.out}};
  print_config(ctx, config);

  const EmbeddingMatrix all = load_embeddings(o.embeddings);
  const DatasetManifest manifest = load_manifest(o.manifest);
  check_paired(all, manifest);
  const auto train_rows = manifest.indices_of(Split::Train);
  if (train_rows.empty()) throw DataError("manifest has no train records");
  const RemapResult remapped = remap_class_ids(manifest.select(train_rows));
  const EmbeddingMatrix train = all.select_rows(train_rows);

  std::optional<LoadedSet> val_index, val_queries;
  if (!o.val_index.empty()) {
    val_index = load_pair(o.val_index);
    val_queries = load_pair(o.val_queries);
  } else {
    const auto idx = manifest.indices_of(Split::Index);
    const auto qry = manifest.indices_of(Split::Query);
    if (!idx.empty() && !qry.empty()) {
      val_index = LoadedSet{all.select_rows(idx), manifest.select(idx)};
      val_queries = LoadedSet{all.select_rows(qry), manifest.select(qry)};
    }
  }

  const std::size_t classes = remapped.mapping.size();
  const ProbeModel init = ProbeModel::init(train.dim(), classes, o.loss_cfg, o.dropout, t.seed);
  *ctx.out << "training on " << train.rows() << " samples, " << classes << " classes, "
           << init.trainable_parameter_count() << " trainable parameters\n";

  EvalHook hook;
  if (val_index) {
    hook = [&](const ProbeModel& m) {
      return evaluate(m, val_index->embeddings, val_index->manifest, val_queries->embeddings, val_queries->manifest)
          .mmp_at_k;
    };
  }
  const TrainResult result = train_probe(train, remapped.manifest, init, t, hook);

  const fs::path dir = o.out;
  make_output_dir(dir);
  save_checkpoint(result.model, dir / "best.prb");
  std::ostringstream history;
  history << "epoch\tmean_loss\tval_mMP@5\tsamples_seen\n" << std::setprecision(10);
  for (const auto& rec : result.history) {
    history << rec.epoch << '\t' << rec.mean_loss << '\t';
    if (rec.eval_metric) {
      history << *rec.eval_metric;
    } else {
      history << '-';
    }
    history << '\t' << rec.samples_seen << '\n';
    *ctx.out << "epoch " << rec.epoch << " loss " << rec.mean_loss;
    if (rec.eval_metric) *ctx.out << " val mMP@5 " << *rec.eval_metric;
    *ctx.out << '\n';
  }
  write_text(dir / "history.tsv", history.str());
  write_text(dir / "class_map.tsv", class_map_tsv(remapped.mapping));

  json metrics{{"best_epoch", result.best_epoch},
               {"epochs_run", result.history.size()},
               {"final_mean_loss", result.history.empty() ? json(nullptr) : json(result.history.back().mean_loss)},
               {"trainable_parameters", result.model.trainable_parameter_count()},
               {"classes", classes},
               {"train_samples", train.rows()}};
  if (!result.history.empty() && result.history[result.best_epoch - 1].eval_metric) {
    metrics["best_val_mMP@5"] = *result.history[result.best_epoch - 1].eval_metric;
  }
  *ctx.out << "best epoch " << result.best_epoch << ", checkpoint " << (dir / "best.prb").string() << '\n';
  write_run_json(ctx, dir, config, metrics);
  return kExitOk;
}

// ---- eval ----

struct EvalCliOptions {
  std::string checkpoint;
  std::string index;
  std::string queries;
  std::size_t top_k = 5;
  std::string out;
  bool per_query = false;
};

void add_eval(CLI::App& app, EvalCliOptions& o) {
  app.add_option("--checkpoint", o.checkpoint, "PRB1 probe; omit to evaluate the embeddings as given")
      ->check(CLI::ExistingFile);
  app.add_option("--index", o.index, "index set as <embeddings.emb>:<manifest.tsv>")->required()->check(kPairOfFiles);
  app.add_option("--queries", o.queries, "query set; omit for self-retrieval over the index")->check(kPairOfFiles);
  app.add_option("--top-k", o.top_k, "retrieval depth")->capture_default_str();
  app.add_option("--out", o.out, "directory for report.tsv and run.json");
  app.add_flag("--per-query", o.per_query, "also write per_query.tsv (needs --out)");
}

int run_eval(const EvalCliOptions& o, const RunContext& ctx) {
  if (o.top_k == 0) throw UsageError("--top-k must be positive");
  if (o.per_query && o.out.empty()) throw UsageError("--per-query needs --out");
  const bool self = o.queries.empty();
  json config{{"checkpoint", o.checkpoint.empty() ? json(nullptr) : json(o.checkpoint)},
              {"index", o.index},
              {"queries", self ? json(nullptr) : json(o.queries)},
              {"self_retrieval", self},
              {"top_k", o.top_k},
              {"out", o.out.empty() ? json(nullptr) : json(o.out)},
              {"per_query", o.per_query}};
  std::optional<ProbeModel> model;
  if (!o.checkpoint.empty()) {
    model = load_checkpoint(o.checkpoint);
    config["loss"] = loss_json(model->loss);
  }
  print_config(ctx, config);

  const LoadedSet index = load_pair(o.index);
  const LoadedSet queries = self ? index : load_pair(o.queries);
  const EvalOptions opts{o.top_k, self};
  const EvalResult result =
      model ? evaluate(*model, index.embeddings, index.manifest, queries.embeddings, queries.manifest, opts)
            : evaluate_embeddings(index.embeddings.to_double(), index.manifest, queries.embeddings.to_double(),
                                  queries.manifest, opts);

  write_report_tsv(result, *ctx.out);
  if (!o.out.empty()) {
    const fs::path dir = o.out;
    make_output_dir(dir);
    {
      auto f = open_output(dir / "report.tsv");
      write_report_tsv(result, f);
    }
    if (o.per_query) {
      auto f = open_output(dir / "per_query.tsv");
      write_per_query_tsv(result, index.manifest, queries.manifest, f);
    }
    write_run_json(ctx, dir, config, metrics_json(result));
  }
  return kExitOk;
}

// ---- zeroshot ----

struct ZeroShotOptions {
  std::string embeddings;
  std::string mode;
  std::uint64_t seed = 0;
  std::string out;
};

void add_zeroshot(CLI::App& app, ZeroShotOptions& o) {
  app.add_option("--embeddings", o.embeddings, "input embeddings (EMB1)")->required()->check(CLI::ExistingFile);
  app.add_option("--mode", o.mode, "random_linear or avg_pool")
      ->required()
      ->check(CLI::IsMember({"random_linear", "avg_pool"}));
  app.add_option("--seed", o.seed, "seed for random_linear")->capture_default_str();
  app.add_option("--out", o.out, "output directory")->required();
}

int run_zeroshot(const ZeroShotOptions& o, const RunContext& ctx) {
  const ZeroShotMode mode = as_usage([&] { return parse_zero_shot_mode(o.mode); });
  const EmbeddingMatrix input = load_embeddings(o.embeddings);
  if (mode == ZeroShotMode::AvgPool && input.dim() % kProjectionDim != 0) {
    throw UsageError("--mode avg_pool: dimension not divisible by 64 (D_in = " + std::to_string(input.dim()) + ")");
  }
  json config{{"embeddings", o.embeddings}, {"mode", o.mode}, {"seed", o.seed}, {"out", o.out},
              {"input_dim", input.dim()}};
  print_config(ctx, config);

  const MatrixD y = zero_shot_project(input.to_double(), mode, o.seed);
  const fs::path dir = o.out;
  make_output_dir(dir);
  save_embeddings(EmbeddingMatrix::from_double(y), dir / "embeddings.emb");
  *ctx.out << "projected " << input.rows() << " x " << input.dim() << " -> " << y.rows() << " x " << y.cols() << '\n';
  write_run_json(ctx, dir, config, {{"rows", y.rows()}, {"output_dim", y.cols()}});
  return kExitOk;
}

// ---- inspect ----

struct InspectOptions {
  std::vector<std::string> paths;
};

void add_inspect(CLI::App& app, InspectOptions& o) {
  app.add_option("paths", o.paths, "EMB1, PRB1 or manifest files")->required()->check(CLI::ExistingFile);
}

json inspect_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  const std::string head(magic, static_cast<std::size_t>(in.gcount()));
  in.close();

  if (head == "EMB1") {
    const EmbeddingMatrix m = load_embeddings(path);
    double norm_sum = 0.0;
    std::size_t zero_rows = 0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      double sq = 0.0;
      for (const float v : m.row(i)) sq += static_cast<double>(v) * v;
      zero_rows += sq == 0.0 ? 1 : 0;
      norm_sum += std::sqrt(sq);
    }
    return {{"path", path},
            {"format", "EMB1"},
            {"rows", m.rows()},
            {"dim", m.dim()},
            {"zero_rows", zero_rows},
            {"mean_norm", m.rows() ? norm_sum / static_cast<double>(m.rows()) : 0.0}};
  }
  if (head == "PRB1") {
    const ProbeModel m = load_checkpoint(path);
    return {{"path", path},
            {"format", "PRB1"},
            {"input_dim", m.input_dim()},
            {"output_dim", kProjectionDim},
            {"classes", m.classifier.classes()},
            {"subcenters", m.classifier.subcenters()},
            {"dropout", m.dropout_rate},
            {"step", m.step},
            {"loss", loss_json(m.loss)},
            {"trainable_parameters", m.trainable_parameter_count()}};
  }
  const DatasetManifest m = load_manifest(path);
  const ClassStats stats = ClassStats::from_manifest(m);
  std::map<std::string, std::size_t> domains;
  for (const auto& r : m.records) ++domains[r.domain];
  json splits = json::object();
  for (const Split s : {Split::Train, Split::Index, Split::Query}) {
    splits[std::string(to_string(s))] = m.indices_of(s).size();
  }
  return {{"path", path},
          {"format", "manifest"},
          {"records", m.size()},
          {"classes", std::count_if(stats.counts.begin(), stats.counts.end(), [](auto n) { return n > 0; })},
          {"n_min", stats.n_min},
          {"n_max", stats.n_max},
          {"splits", splits},
          {"domains", domains}};
}

int run_inspect(const InspectOptions& o, const RunContext& ctx) {
  print_config(ctx, {{"paths", o.paths}});
  for (const auto& p : o.paths) *ctx.out << inspect_file(p).dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Margin-loss linear probing, curation and retrieval evaluation on precomputed embeddings", "unifex"};
  app.require_subcommand(1);
  app.set_version_flag("--version", UNIFEX_VERSION);

  CurateOptions curate_opts;
  TrainOptions train_opts;
  EvalCliOptions eval_opts;
  ZeroShotOptions zeroshot_opts;
  InspectOptions inspect_opts;
  auto* curate_cmd = app.add_subcommand("curate", "filter, cap and subsample a manifest");
  auto* train_cmd = app.add_subcommand("train", "train the 64-d projection head with a margin loss");
  auto* eval_cmd = app.add_subcommand("eval", "retrieval evaluation (mMP@k, mAP@k)");
  auto* zeroshot_cmd = app.add_subcommand("zeroshot", "training-free projection to 64-d");
  auto* inspect_cmd = app.add_subcommand("inspect", "describe EMB1, PRB1 and manifest files");
  add_curate(*curate_cmd, curate_opts);
  add_train(*train_cmd, train_opts);
  add_eval(*eval_cmd, eval_opts);
  add_zeroshot(*zeroshot_cmd, zeroshot_opts);
  add_inspect(*inspect_cmd, inspect_opts);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  RunContext ctx{"", &args, &out};
  try {
    if (*curate_cmd) return run_curate(curate_opts, ctx = {"curate", &args, &out});
    if (*train_cmd) return run_train(train_opts, ctx = {"train", &args, &out});
    if (*eval_cmd) return run_eval(eval_opts, ctx = {"eval", &args, &out});
    if (*zeroshot_cmd) return run_zeroshot(zeroshot_opts, ctx = {"zeroshot", &args, &out});
    if (*inspect_cmd) return run_inspect(inspect_opts, ctx = {"inspect", &args, &out});
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\nRun with --help for more information.\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error [" << ctx.subcommand << "/" << error_kind(e) << "]: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace unifex::cli
