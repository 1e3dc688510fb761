#include "avgk/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "avgk/error.hpp"

namespace avgk {

namespace fs = std::filesystem;

fs::path results_root() {
  if (const char* env = std::getenv("AVGK_RESULTS_DIR"); env != nullptr && *env != '\0') {
    return fs::path(env);
  }
  return fs::path("results");
}

std::vector<LrStep> parse_lr_schedule(const std::string& text) {
  std::vector<LrStep> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw InvalidConfig("lr-schedule entry '" + item + "' is not epoch:divisor");
    }
    try {
      std::size_t used = 0;
      LrStep step;
      step.epoch = std::stoul(item.substr(0, colon), &used);
      if (used != colon) throw std::invalid_argument("epoch");
      const std::string div = item.substr(colon + 1);
      step.divisor = std::stod(div, &used);
      if (used != div.size()) throw std::invalid_argument("divisor");
      out.push_back(step);
    } catch (const std::logic_error&) {
      throw InvalidConfig("lr-schedule entry '" + item + "' is not epoch:divisor");
    }
  }
  return out;
}

std::string format_lr_schedule(const std::vector<LrStep>& steps) {
  std::ostringstream os;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i > 0) os << ',';
    os << steps[i].epoch << ':' << steps[i].divisor;
  }
  return os.str();
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  const TrainConfig& t = cfg.train;
  return {{"data", cfg.data_dir.generic_string()},
          {"loss", to_string(t.loss)},
          {"k", t.k_target},
          {"alpha", t.alpha},
          {"beta", t.beta},
          {"batch", t.batch_size},
          {"lr", t.learning_rate},
          {"momentum", t.momentum},
          {"weight_decay", t.weight_decay},
          {"lr_schedule", format_lr_schedule(t.lr_schedule)},
          {"epochs", t.max_epochs},
          {"patience", t.early_stop_patience},
          {"seed", t.rng_seed},
          {"hidden", cfg.hidden},
          {"activation", cfg.activation == Activation::kTanh ? "tanh" : "identity"},
          {"few_below", cfg.groups.few_below},
          {"many_above", cfg.groups.many_above}};
}

std::string config_hash(const ExperimentConfig& cfg) { return fnv1a_hex(to_json(cfg).dump()); }

SetMetrics evaluate_model(const TwoHeadMlp& model, const DatasetSplit& data,
                          std::size_t k_target, const GroupBounds& bounds,
                          std::size_t batch_size) {
  const ProbMatrix val = predict_probabilities(model, data.val.features, batch_size);
  const Threshold thr = calibrate(val, k_target);
  const ProbMatrix test = predict_probabilities(model, data.test.features, batch_size);
  return evaluate_sets(test, data.test.labels, thr.lambda(), data.class_train_counts, bounds);
}

namespace {

nlohmann::json timestamp_value() {
  // Records must be byte-reproducible, so the wall clock is never read; a
  // build system can pin a timestamp through SOURCE_DATE_EPOCH.
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env != nullptr && *env != '\0') {
    return std::string(env);
  }
  return nullptr;
}

fs::path default_run_dir(const ExperimentConfig& cfg, const fs::path& root) {
  std::ostringstream name;
  name << to_string(cfg.train.loss) << "-k" << cfg.train.k_target << "-s" << cfg.train.rng_seed
       << '-' << config_hash(cfg).substr(0, 8);
  return root / "runs" / name.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw Error("failed writing " + path.string());
}

void write_histograms(const fs::path& dir, const SetMetrics& m) {
  std::ostringstream overall;
  write_histogram_csv(overall, m.histogram);
  write_text(dir / "histogram.csv", overall.str());
  if (!m.groups) return;
  for (std::size_t g = 0; g < 3; ++g) {
    const auto& r = m.groups->groups[g];
    if (!r) continue;
    std::ostringstream os;
    write_histogram_csv(os, r->histogram);
    write_text(dir / (std::string("histogram_") + to_string(static_cast<FrequencyGroup>(g)) + ".csv"),
               os.str());
  }
}

void persist(const ExperimentOutcome& outcome) {
  fs::create_directories(outcome.run_dir);
  save_checkpoint(outcome.run_dir / "checkpoint.bin", outcome.training.best);
  std::string log;
  for (const auto& e : outcome.training.log) log += to_json(e).dump() + "\n";
  write_text(outcome.run_dir / "train_log.jsonl", log);
  write_text(outcome.run_dir / "record.json", outcome.record.dump() + "\n");
  write_histograms(outcome.run_dir, outcome.test_metrics);
}

}  // namespace

ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const DatasetFiles& dataset,
                                 const fs::path& root) {
  const DatasetSplit& data = dataset.split;
  ModelShape shape;
  shape.input_dim = data.feature_dim();
  shape.hidden = cfg.hidden;
  shape.num_classes = data.num_classes;
  shape.activation = cfg.activation;
  cfg.train.validate(data.num_classes);

  ExperimentOutcome out;
  out.run_dir = cfg.out_dir.empty() ? default_run_dir(cfg, root) : cfg.out_dir;
  out.training = train(TwoHeadMlp::initialize(shape, cfg.train.rng_seed), data, cfg.train);
  const Checkpoint& best = out.training.best;
  out.test_metrics =
      evaluate_model(best.model, data, cfg.train.k_target, cfg.groups, cfg.train.eval_batch_size);

  out.record = {{"config", to_json(cfg)},
                {"config_hash", config_hash(cfg)},
                {"best_epoch", best.epoch},
                {"epochs_run", out.training.log.size() - 1},
                {"val_avg_k_accuracy", best.best_val_accuracy},
                {"metrics", to_json(out.test_metrics)},
                {"provenance",
                 {{"dataset_manifest_hash", dataset.manifest_hash},
                  {"timestamp", timestamp_value()},
                  {"code_version", kCodeVersion}}}};
  return out;
}

ExperimentOutcome run_and_persist(const ExperimentConfig& cfg, const fs::path& root) {
  const DatasetFiles dataset = load_dataset(cfg.data_dir);
  ExperimentOutcome out = run_experiment(cfg, dataset, root);
  persist(out);
  return out;
}

void append_record(const fs::path& path, const nlohmann::json& record) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::app);
  if (!os) throw Error("cannot open " + path.string() + " for appending");
  os << record.dump() << '\n';
}

std::vector<nlohmann::json> read_records(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

std::pair<double, double> mean_ci95(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double stderr_ = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return {mean, 1.96 * stderr_};
}

std::vector<SummaryRow> summarize(const std::vector<nlohmann::json>& records) {
  std::vector<std::string> order;
  std::map<std::string, std::pair<nlohmann::json, std::vector<const nlohmann::json*>>> groups;
  for (const auto& r : records) {
    nlohmann::json cfg = r.at("config");
    cfg.erase("seed");
    const std::string key = cfg.dump();
    auto [it, inserted] = groups.try_emplace(key, cfg, std::vector<const nlohmann::json*>{});
    if (inserted) order.push_back(key);
    it->second.second.push_back(&r);
  }
  std::vector<SummaryRow> rows;
  for (const auto& key : order) {
    const auto& [cfg, members] = groups.at(key);
    std::vector<double> acc;
    double size = 0.0;
    for (const auto* r : members) {
      acc.push_back(r->at("metrics").at("avg_k_accuracy").get<double>());
      size += r->at("metrics").at("mean_set_size").get<double>();
    }
    const auto [mean, ci] = mean_ci95(acc);
    rows.push_back(SummaryRow{cfg, members.size(), mean, ci,
                              size / static_cast<double>(members.size())});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Command line

namespace {

/// Raw option storage for the train-like subcommands.
struct TrainFlags {
  std::string data;
  std::string loss = "avgk";
  std::size_t k = 5;
  double alpha = 0.3;
  double beta = 0.01;
  std::size_t batch = 64;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::string lr_schedule;
  std::size_t epochs = 30;
  std::size_t patience = 0;
  std::uint64_t seed = 1;
  std::vector<std::size_t> hidden{64, 64};
  std::string activation = "tanh";
  std::size_t few_below = 20;
  std::size_t many_above = 100;
  std::string out;
  std::string config;
};

void add_train_options(CLI::App& cmd, TrainFlags& f) {
  cmd.add_option("--config", f.config, "key=value file of option defaults; flags override its keys");
  cmd.add_option("--data", f.data, "Dataset directory (default: <root>/dataset)");
  cmd.add_option("--loss", f.loss, std::string("Loss kind: ") + loss_kind_names())
      ->check([](const std::string& v) -> std::string {
        return parse_loss_kind(v) ? "" : "unknown loss '" + v + "'; valid kinds: " + loss_kind_names();
      })
      ->capture_default_str();
  cmd.add_option("--k", f.k, "Target average set size K")->capture_default_str();
  cmd.add_option("--alpha", f.alpha, "Pseudo-label weight (avgk)")->capture_default_str();
  cmd.add_option("--beta", f.beta, "Expected-positive regularization weight (epr)")
      ->capture_default_str();
  cmd.add_option("--batch", f.batch, "Batch size")->capture_default_str();
  cmd.add_option("--lr", f.lr, "Initial learning rate")->capture_default_str();
  cmd.add_option("--momentum", f.momentum, "Nesterov momentum")->capture_default_str();
  cmd.add_option("--weight-decay", f.weight_decay, "L2 weight decay")->capture_default_str();
  cmd.add_option("--lr-schedule", f.lr_schedule, "epoch:divisor list, e.g. 150:10,225:10");
  cmd.add_option("--epochs", f.epochs, "Maximum epochs")->capture_default_str();
  cmd.add_option("--patience", f.patience, "Early-stop patience in epochs (0 = off)")
      ->capture_default_str();
  cmd.add_option("--seed", f.seed, "Seed for initialization and shuffling")->capture_default_str();
  cmd.add_option("--hidden", f.hidden, "Trunk layer widths")->delimiter(',')->capture_default_str();
  cmd.add_option("--activation", f.activation, "Trunk nonlinearity")
      ->check(CLI::IsMember({"tanh", "identity"}))
      ->capture_default_str();
  cmd.add_option("--few-below", f.few_below, "Few-shot: fewer training examples than this")
      ->capture_default_str();
  cmd.add_option("--many-above", f.many_above, "Many-shot: more training examples than this")
      ->capture_default_str();
  cmd.add_option("--out", f.out, "Run directory (default: <root>/runs/<name>)");
}

ExperimentConfig to_config(const TrainFlags& f, const fs::path& root) {
  ExperimentConfig cfg;
  cfg.data_dir = f.data.empty() ? root / "dataset" : fs::path(f.data);
  TrainConfig& t = cfg.train;
  t.loss = *parse_loss_kind(f.loss);
  t.k_target = f.k;
  t.alpha = f.alpha;
  t.beta = f.beta;
  t.batch_size = f.batch;
  t.learning_rate = f.lr;
  t.momentum = f.momentum;
  t.weight_decay = f.weight_decay;
  t.lr_schedule = parse_lr_schedule(f.lr_schedule);
  t.max_epochs = f.epochs;
  t.early_stop_patience = f.patience;
  t.rng_seed = f.seed;
  cfg.hidden = f.hidden;
  cfg.activation = f.activation == "identity" ? Activation::kIdentity : Activation::kTanh;
  cfg.groups = GroupBounds{f.few_below, f.many_above};
  cfg.out_dir = f.out;
  return cfg;
}

/// Fills options not given on the command line from a key=value file. Keys are
/// option names without the leading dashes; '_' and '-' are interchangeable.
void apply_config_file(CLI::App& cmd, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidConfig("cannot open config file " + path);
  for (const CLI::ConfigItem& item : CLI::ConfigINI().from_config(is)) {
    std::string name = item.name;
    std::replace(name.begin(), name.end(), '_', '-');
    CLI::Option* opt = name == "config" ? nullptr : cmd.get_option_no_throw("--" + name);
    if (opt == nullptr || !item.parents.empty()) {
      throw InvalidConfig("unknown key '" + item.fullname() + "' in " + path);
    }
    if (opt->count() > 0) continue;
    opt->add_result(item.inputs);
    opt->run_callback();
  }
}

struct GenerateFlags {
  std::size_t classes = 10;
  std::size_t superclasses = 5;
  std::size_t dim = 2;
  double sep = 1.0;
  double spread = 6.0;
  double sigma = 1.0;
  double tail = 0.0;
  std::size_t n = 27000;
  double val_fraction = 0.1;
  double test_fraction = 0.2;
  std::optional<std::size_t> n_val;
  std::optional<std::size_t> n_test;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_generate(const GenerateFlags& f, const fs::path& root, std::ostream& out) {
  SplitPlan plan = SplitPlan::from_fractions(f.n, f.val_fraction, f.test_fraction);
  if (f.n_val) plan.n_val = *f.n_val;
  if (f.n_test) plan.n_test = *f.n_test;
  if (plan.n_val + plan.n_test >= f.n) throw InvalidConfig("--n-val + --n-test must be < --n");
  SuperclassLayout layout{f.classes, f.superclasses, f.dim, f.sep, f.spread, f.sigma, f.tail};
  const SyntheticSpec spec =
      make_superclass_spec(layout, f.seed, f.n - plan.n_val - plan.n_test, plan.n_val, plan.n_test);
  const fs::path dir = f.out.empty() ? root / "dataset" : fs::path(f.out);
  save_dataset(dir, sample_table(spec), plan, spec.seed, spec);
  out << "wrote " << (dir / "data.csv").string() << " and manifest.json (L=" << spec.num_classes
      << ", n=" << spec.n_total() << ")\n";
  return 0;
}

struct IngestFlags {
  std::string input;
  std::optional<std::size_t> classes;
  double val_fraction = 0.1;
  double test_fraction = 0.2;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_ingest(const IngestFlags& f, const fs::path& root, std::ostream& out) {
  std::ifstream is(f.input);
  if (!is) throw Error("cannot open " + f.input);
  CsvOptions csv;
  csv.num_classes = f.classes;
  const Table table = read_table_csv(is, csv);
  const SplitPlan plan =
      SplitPlan::from_fractions(table.labels.size(), f.val_fraction, f.test_fraction);
  const fs::path dir = f.out.empty() ? root / "dataset" : fs::path(f.out);
  save_dataset(dir, table, plan, f.seed, std::nullopt);
  out << "wrote " << (dir / "data.csv").string() << " (L=" << table.num_classes
      << ", n=" << table.labels.size() << ")\n";
  return 0;
}

int cmd_train(const TrainFlags& f, const fs::path& root, std::ostream& out) {
  const ExperimentConfig cfg = to_config(f, root);
  const ExperimentOutcome o = run_and_persist(cfg, root);
  append_record(root / "records.jsonl", o.record);
  out << o.record.dump() << '\n';
  return 0;
}

struct EvaluateFlags {
  std::string checkpoint;
  std::string data;
  std::size_t k = 5;
  std::size_t batch = 1024;
  std::size_t few_below = 20;
  std::size_t many_above = 100;
  bool oracle = false;
  std::string out;
};

int cmd_evaluate(const EvaluateFlags& f, const fs::path& root, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(f.checkpoint);
  const DatasetFiles dataset = load_dataset(f.data.empty() ? root / "dataset" : fs::path(f.data));
  const ModelShape& shape = ckpt.model.shape();
  if (shape.input_dim != dataset.split.feature_dim() ||
      shape.num_classes != dataset.split.num_classes) {
    throw ShapeError("checkpoint expects " + std::to_string(shape.input_dim) + " features / " +
                     std::to_string(shape.num_classes) + " classes, dataset has " +
                     std::to_string(dataset.split.feature_dim()) + " features / " +
                     std::to_string(dataset.split.num_classes) + " classes");
  }
  const GroupBounds bounds{f.few_below, f.many_above};
  const SetMetrics m = evaluate_model(ckpt.model, dataset.split, f.k, bounds, f.batch);
  nlohmann::json result = {{"checkpoint_epoch", ckpt.epoch}, {"k", f.k}, {"metrics", to_json(m)}};
  if (f.oracle) {
    if (!dataset.spec) throw InvalidData("--oracle needs a synthetic dataset with a generating spec");
    const BayesResult bayes =
        bayes_avgk_classifier(PosteriorOracle(*dataset.spec), dataset.split.test.features, f.k);
    result["bayes"] = {{"lambda", bayes.threshold.lambda()},
                       {"avg_k_accuracy", bayes.accuracy},
                       {"mean_set_size", bayes.mean_set_size}};
  }
  const fs::path dir = f.out.empty() ? fs::path(f.checkpoint).parent_path() / "eval" : fs::path(f.out);
  fs::create_directories(dir);
  write_histograms(dir, m);
  out << result.dump() << '\n';
  return 0;
}

struct SweepFlags {
  std::string axis;
  std::vector<std::string> values;
  std::vector<std::uint64_t> seeds{1};
  std::size_t jobs = 1;
};

int cmd_sweep(const TrainFlags& base_flags, const SweepFlags& s, const fs::path& root,
              std::ostream& out) {
  if (s.values.empty()) throw InvalidConfig("--values must list at least one value");
  if (s.seeds.empty()) throw InvalidConfig("--seeds must list at least one seed");
  const ExperimentConfig base = to_config(base_flags, root);
  const DatasetFiles dataset = load_dataset(base.data_dir);

  std::vector<ExperimentConfig> cells;
  for (const auto& value : s.values) {
    for (std::uint64_t seed : s.seeds) {
      ExperimentConfig cfg = base;
      cfg.out_dir.clear();
      cfg.train.rng_seed = seed;
      try {
        if (s.axis == "alpha") {
          cfg.train.alpha = std::stod(value);
        } else if (s.axis == "beta") {
          cfg.train.beta = std::stod(value);
        } else if (s.axis == "k") {
          cfg.train.k_target = std::stoul(value);
        } else {
          // Keep lr / |B| constant across the sweep.
          cfg.train.batch_size = std::stoul(value);
          cfg.train.learning_rate = base.train.learning_rate *
                                    static_cast<double>(cfg.train.batch_size) /
                                    static_cast<double>(base.train.batch_size);
        }
      } catch (const std::logic_error&) {
        throw InvalidConfig("sweep value '" + value + "' is not valid for axis " + s.axis);
      }
      cfg.train.validate(dataset.split.num_classes);
      cells.push_back(std::move(cfg));
    }
  }

  std::vector<std::optional<ExperimentOutcome>> outcomes(cells.size());
  std::vector<std::string> failures(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        outcomes[i] = run_experiment(cells[i], dataset, root);
        persist(*outcomes[i]);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(s.jobs, 1, cells.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!failures[i].empty()) throw Error("sweep cell " + std::to_string(i) + ": " + failures[i]);
  }

  // Single writer, fixed cell order.
  std::vector<nlohmann::json> records;
  for (const auto& o : outcomes) {
    append_record(root / "records.jsonl", o->record);
    records.push_back(o->record);
  }

  nlohmann::json sweep_id = to_json(base);
  sweep_id["axis"] = s.axis;
  sweep_id["values"] = s.values;
  sweep_id["seeds"] = s.seeds;
  const fs::path dir = root / "sweeps" / (s.axis + "-" + fnv1a_hex(sweep_id.dump()).substr(0, 8));
  fs::create_directories(dir);

  std::ostringstream summary;
  std::ostringstream plot;
  summary << s.axis << ",n,mean_avg_k_accuracy,ci95,mean_set_size,lr\n";
  plot << s.axis << ",mean,ci\n";
  out << std::left << std::setw(10) << s.axis << std::setw(6) << "n" << std::setw(14) << "avg-K acc"
      << std::setw(12) << "ci95" << "mean |g|\n";
  const std::size_t per_value = s.seeds.size();
  for (std::size_t v = 0; v < s.values.size(); ++v) {
    std::vector<double> acc;
    double size = 0.0;
    for (std::size_t k = 0; k < per_value; ++k) {
      const auto& m = records[v * per_value + k].at("metrics");
      acc.push_back(m.at("avg_k_accuracy").get<double>());
      size += m.at("mean_set_size").get<double>();
    }
    size /= static_cast<double>(per_value);
    const auto [mean, ci] = mean_ci95(acc);
    const double lr = cells[v * per_value].train.learning_rate;
    summary << s.values[v] << ',' << per_value << ',' << nlohmann::json(mean).dump() << ','
            << nlohmann::json(ci).dump() << ',' << nlohmann::json(size).dump() << ','
            << nlohmann::json(lr).dump() << '\n';
    plot << s.values[v] << ',' << nlohmann::json(mean).dump() << ',' << nlohmann::json(ci).dump()
         << '\n';
    out << std::left << std::setw(10) << s.values[v] << std::setw(6) << per_value << std::setw(14)
        << std::fixed << std::setprecision(4) << mean << std::setw(12) << ci << size << '\n';
  }
  write_text(dir / "summary.csv", summary.str());
  write_text(dir / ("plot_" + s.axis + ".csv"), plot.str());
  out << "summary: " << (dir / "summary.csv").string() << '\n';
  return 0;
}

int cmd_summarize(const std::string& records_path, const std::string& out_path,
                  const fs::path& root, std::ostream& out) {
  const fs::path in = records_path.empty() ? root / "records.jsonl" : fs::path(records_path);
  const auto rows = summarize(read_records(in));
  std::ostringstream csv;
  csv << "loss,k,alpha,beta,batch,lr,n,mean_avg_k_accuracy,ci95,mean_set_size\n";
  for (const auto& r : rows) {
    const auto& c = r.config;
    csv << c.at("loss").get<std::string>() << ',' << c.at("k").dump() << ',' << c.at("alpha").dump()
        << ',' << c.at("beta").dump() << ',' << c.at("batch").dump() << ',' << c.at("lr").dump()
        << ',' << r.n << ',' << nlohmann::json(r.mean).dump() << ','
        << nlohmann::json(r.ci95).dump() << ',' << nlohmann::json(r.mean_set_size).dump() << '\n';
  }
  const fs::path dest = out_path.empty() ? root / "summary.csv" : fs::path(out_path);
  if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
  write_text(dest, csv.str());
  out << csv.str();
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Average-K set-valued classification: data, training, calibration, sweeps"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  GenerateFlags gen;
  auto* generate = app.add_subcommand("generate", "Sample a synthetic Gaussian-mixture dataset");
  generate->add_option("--classes", gen.classes, "Class count L")->capture_default_str();
  generate->add_option("--superclasses", gen.superclasses, "Number of superclass clusters")
      ->capture_default_str();
  generate->add_option("--dim", gen.dim, "Feature dimension (>= 2)")->capture_default_str();
  generate->add_option("--sep", gen.sep, "Within-superclass mean separation, in sigmas")
      ->capture_default_str();
  generate->add_option("--spread", gen.spread, "Distance between neighbouring superclass centres, in sigmas")
      ->capture_default_str();
  generate->add_option("--sigma", gen.sigma, "Shared isotropic standard deviation")->capture_default_str();
  generate->add_option("--tail", gen.tail, "Power-law prior exponent (0 = balanced)")
      ->capture_default_str();
  generate->add_option("--n", gen.n, "Total sample count")->capture_default_str();
  generate->add_option("--val-fraction", gen.val_fraction)->capture_default_str();
  generate->add_option("--test-fraction", gen.test_fraction)->capture_default_str();
  generate->add_option("--n-val", gen.n_val, "Validation size (overrides --val-fraction)");
  generate->add_option("--n-test", gen.n_test, "Test size (overrides --test-fraction)");
  generate->add_option("--seed", gen.seed)->capture_default_str();
  generate->add_option("--out", gen.out, "Output directory (default: <root>/dataset)");

  IngestFlags ing;
  auto* ingest = app.add_subcommand("ingest", "Import a feature,label CSV as a dataset directory");
  ingest->add_option("input", ing.input, "CSV file")->required();
  ingest->add_option("--classes", ing.classes, "Declared class count");
  ingest->add_option("--val-fraction", ing.val_fraction)->capture_default_str();
  ingest->add_option("--test-fraction", ing.test_fraction)->capture_default_str();
  ingest->add_option("--seed", ing.seed)->capture_default_str();
  ingest->add_option("--out", ing.out, "Output directory (default: <root>/dataset)");

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "Train one model and append its record");
  add_train_options(*train_cmd, tf);

  EvaluateFlags ev;
  auto* evaluate = app.add_subcommand("evaluate", "Recalibrate and score a checkpoint");
  evaluate->add_option("--checkpoint", ev.checkpoint, "checkpoint.bin path")->required();
  evaluate->add_option("--data", ev.data, "Dataset directory (default: <root>/dataset)");
  evaluate->add_option("--k", ev.k)->capture_default_str();
  evaluate->add_option("--batch", ev.batch, "Rows per forward pass")->capture_default_str();
  evaluate->add_option("--few-below", ev.few_below)->capture_default_str();
  evaluate->add_option("--many-above", ev.many_above)->capture_default_str();
  evaluate->add_flag("--oracle", ev.oracle, "Also report the Bayes average-K ceiling");
  evaluate->add_option("--out", ev.out, "Histogram directory (default: <checkpoint dir>/eval)");

  TrainFlags sf;
  SweepFlags sw;
  auto* sweep = app.add_subcommand("sweep", "Train the cross-product of axis values and seeds");
  add_train_options(*sweep, sf);
  sweep->add_option("--axis", sw.axis, "alpha|beta|batch|k")
      ->required()
      ->check(CLI::IsMember({"alpha", "beta", "batch", "k"}));
  sweep->add_option("--values", sw.values, "Comma-separated axis values")
      ->required()
      ->delimiter(',');
  sweep->add_option("--seeds", sw.seeds, "Comma-separated seeds")->delimiter(',')->capture_default_str();
  sweep->add_option("--jobs", sw.jobs, "Worker threads")->capture_default_str();

  std::string records_path;
  std::string summary_out;
  auto* summarize_cmd = app.add_subcommand("summarize", "Aggregate records by config over seeds");
  summarize_cmd->add_option("--records", records_path, "records.jsonl (default: <root>/records.jsonl)");
  summarize_cmd->add_option("--out", summary_out, "CSV destination (default: <root>/summary.csv)");

  try {
    app.parse(argc, argv);
    if (!tf.config.empty()) apply_config_file(*train_cmd, tf.config);
    if (!sf.config.empty()) apply_config_file(*sweep, sf.config);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const InvalidConfig& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  const fs::path root = results_root();
  try {
    if (generate->parsed()) return cmd_generate(gen, root, out);
    if (ingest->parsed()) return cmd_ingest(ing, root, out);
    if (train_cmd->parsed()) return cmd_train(tf, root, out);
    if (evaluate->parsed()) return cmd_evaluate(ev, root, out);
    if (sweep->parsed()) return cmd_sweep(sf, sw, root, out);
    if (summarize_cmd->parsed()) return cmd_summarize(records_path, summary_out, root, out);
  } catch (const InvalidConfig& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace avgk
