#include "avgk/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "avgk/error.hpp"

namespace avgk {

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw InvalidConfig("synthetic spec needs at least 2 classes");
  if (feature_dim < 1) throw InvalidConfig("synthetic spec needs feature_dim >= 1");
  if (means.size() != num_classes) throw InvalidConfig("one mean vector per class required");
  for (const auto& m : means) {
    if (m.size() != feature_dim) throw InvalidConfig("mean vector has the wrong dimension");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidConfig("sigma must be positive");
  if (priors.size() != num_classes) throw InvalidConfig("one prior per class required");
  double total = 0.0;
  for (double p : priors) {
    if (!(p >= 0.0)) throw InvalidConfig("priors must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidConfig("priors must sum to 1");
  if (n_total() == 0) throw InvalidData("synthetic spec requests zero samples");
}

std::vector<double> power_law_priors(std::size_t num_classes, double exponent) {
  std::vector<double> p(num_classes);
  for (std::size_t j = 0; j < num_classes; ++j) {
    p[j] = std::pow(static_cast<double>(j + 1), -exponent);
  }
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= total;
  return p;
}

namespace {

// Circle radius on which n equally spaced points are `chord` apart.
double ring_radius(std::size_t n, double chord) {
  if (n < 2) return 0.0;
  return chord / (2.0 * std::sin(std::numbers::pi / static_cast<double>(n)));
}

}  // namespace

SyntheticSpec make_superclass_spec(const SuperclassLayout& layout, std::uint64_t seed,
                                   std::size_t n_train, std::size_t n_val, std::size_t n_test) {
  const std::size_t L = layout.num_classes;
  const std::size_t S = layout.num_superclasses;
  if (S < 1 || S > L) throw InvalidConfig("need 1 <= superclasses <= classes");
  if (layout.feature_dim < 2) throw InvalidConfig("superclass layout needs feature_dim >= 2");

  SyntheticSpec spec;
  spec.num_classes = L;
  spec.feature_dim = layout.feature_dim;
  spec.sigma = layout.sigma;
  spec.priors = power_law_priors(L, layout.tail_exponent);
  spec.seed = seed;
  spec.n_train = n_train;
  spec.n_val = n_val;
  spec.n_test = n_test;
  spec.means.assign(L, std::vector<double>(layout.feature_dim, 0.0));

  const double outer = ring_radius(S, layout.spread * layout.sigma);
  for (std::size_t s = 0; s < S; ++s) {
    const std::size_t first = s * L / S;
    const std::size_t last = (s + 1) * L / S;
    const std::size_t members = last - first;
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(s) / static_cast<double>(S);
    const double cx = outer * std::cos(theta);
    const double cy = outer * std::sin(theta);
    const double inner = ring_radius(members, layout.separation * layout.sigma);
    for (std::size_t m = 0; m < members; ++m) {
      const double phi =
          theta + 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(members);
      spec.means[first + m][0] = cx + inner * std::cos(phi);
      spec.means[first + m][1] = cy + inner * std::sin(phi);
    }
  }
  spec.validate();
  return spec;
}

SplitPlan SplitPlan::from_fractions(std::size_t n, double val_fraction, double test_fraction) {
  if (!(val_fraction >= 0.0) || !(test_fraction >= 0.0) || val_fraction + test_fraction >= 1.0) {
    throw InvalidConfig("split fractions must be non-negative and sum to less than 1");
  }
  const auto cut = [n](double f) {
    // The epsilon keeps exact products such as 0.1 * 4000 from flooring to 399.
    return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9));
  };
  return SplitPlan{cut(val_fraction), cut(test_fraction)};
}

namespace {

Split take_rows(const Table& table, std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end());
  Split s;
  s.features = Matrix(idx.size(), table.features.cols());
  s.labels.reserve(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto src = table.features.row(idx[r]);
    std::copy(src.begin(), src.end(), s.features.row(r).begin());
    s.labels.push_back(table.labels[idx[r]]);
  }
  s.indices = std::move(idx);
  return s;
}

}  // namespace

DatasetSplit split_table(const Table& table, const SplitPlan& plan, std::uint64_t seed) {
  const std::size_t n = table.labels.size();
  if (plan.n_val + plan.n_test >= n) {
    throw InvalidData("split leaves no training rows (" + std::to_string(n) + " rows total)");
  }
  if (plan.n_val == 0 || plan.n_test == 0) {
    throw InvalidData("validation and test splits must be non-empty");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto a = order.begin();
  const auto b = a + static_cast<std::ptrdiff_t>(n - plan.n_val - plan.n_test);
  const auto c = b + static_cast<std::ptrdiff_t>(plan.n_val);

  DatasetSplit out;
  out.num_classes = table.num_classes;
  out.train = take_rows(table, {a, b});
  out.val = take_rows(table, {b, c});
  out.test = take_rows(table, {c, order.end()});
  out.class_train_counts.assign(table.num_classes, 0);
  for (Label y : out.train.labels) ++out.class_train_counts[y];
  return out;
}

Table sample_table(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_total();
  Table t;
  t.num_classes = spec.num_classes;
  t.features = Matrix(n, spec.feature_dim);
  t.labels.resize(n);
  std::mt19937_64 rng(spec.seed);
  std::discrete_distribution<std::size_t> pick(spec.priors.begin(), spec.priors.end());
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = pick(rng);
    t.labels[i] = y;
    auto x = t.features.row(i);
    for (std::size_t d = 0; d < spec.feature_dim; ++d) {
      x[d] = spec.means[y][d] + spec.sigma * noise(rng);
    }
  }
  return t;
}

DatasetSplit generate(const SyntheticSpec& spec) {
  return split_table(sample_table(spec), SplitPlan{spec.n_val, spec.n_test}, spec.seed);
}

PosteriorOracle::PosteriorOracle(SyntheticSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  log_priors_.reserve(spec_.num_classes);
  for (double p : spec_.priors) log_priors_.push_back(std::log(p));
}

std::vector<double> PosteriorOracle::posterior(std::span<const double> x) const {
  if (x.size() != spec_.feature_dim) throw ShapeError("posterior: input dimension mismatch");
  const double inv_two_var = 1.0 / (2.0 * spec_.sigma * spec_.sigma);
  std::vector<double> logp(spec_.num_classes);
  for (std::size_t j = 0; j < spec_.num_classes; ++j) {
    double sq = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
      const double diff = x[d] - spec_.means[j][d];
      sq += diff * diff;
    }
    logp[j] = log_priors_[j] - sq * inv_two_var;
  }
  const double shift = *std::max_element(logp.begin(), logp.end());
  double total = 0.0;
  for (double& v : logp) {
    v = std::exp(v - shift);
    total += v;
  }
  for (double& v : logp) v /= total;
  return logp;
}

ProbMatrix PosteriorOracle::posterior_matrix(const Matrix& xs) const {
  ProbMatrix out(xs.rows(), spec_.num_classes);
  for (std::size_t i = 0; i < xs.rows(); ++i) {
    const auto p = posterior(xs.row(i));
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

BayesResult bayes_avgk_classifier(const PosteriorOracle& oracle, const Matrix& xs,
                                  std::size_t k_target) {
  if (k_target >= oracle.spec().num_classes) {
    throw InvalidConfig("k_target must be smaller than the class count");
  }
  const ProbMatrix post = oracle.posterior_matrix(xs);
  Threshold thr = calibrate(post, k_target);
  PredictionSet sets = predict_sets(post, thr);
  double covered = 0.0;
  std::size_t total_size = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (Label j : sets.sets[i]) covered += post(i, j);
    total_size += sets.sets[i].size();
  }
  const double n = static_cast<double>(xs.rows());
  return BayesResult{thr, std::move(sets), covered / n, static_cast<double>(total_size) / n};
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::optional<std::size_t> parse_label(std::string_view s) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

}  // namespace

void write_table_csv(std::ostream& os, const Table& table) {
  const std::size_t dim = table.features.cols();
  for (std::size_t d = 0; d < dim; ++d) os << 'x' << d << ',';
  os << "label\n";
  for (std::size_t i = 0; i < table.labels.size(); ++i) {
    for (double v : table.features.row(i)) os << format_double(v) << ',';
    os << table.labels[i] << '\n';
  }
}

Table read_table_csv(std::istream& is, const CsvOptions& options) {
  std::vector<double> values;
  LabelVector labels;
  std::size_t width = 0;
  std::size_t line_no = 0;
  bool seen_row = false;
  std::string line;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, options.delimiter);
    if (!seen_row) {
      seen_row = true;
      const bool numeric = std::all_of(fields.begin(), fields.end(),
                                       [](std::string_view f) { return parse_double(f).has_value(); });
      if (!numeric) continue;  // header
    }
    if (fields.size() < 2) throw ParseError("need at least one feature and a label", line_no);
    if (width == 0) width = fields.size();
    if (fields.size() != width) {
      throw ParseError("expected " + std::to_string(width) + " columns, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    for (std::size_t c = 0; c + 1 < fields.size(); ++c) {
      const auto v = parse_double(fields[c]);
      if (!v) throw ParseError("non-numeric cell '" + std::string(fields[c]) + "'", line_no);
      if (!std::isfinite(*v)) throw ParseError("non-finite feature value", line_no);
      values.push_back(*v);
    }
    const auto y = parse_label(fields.back());
    if (!y) throw ParseError("label '" + std::string(fields.back()) + "' is not a class index", line_no);
    if (options.num_classes && *y >= *options.num_classes) {
      throw ParseError("label " + std::to_string(*y) + " >= declared class count " +
                           std::to_string(*options.num_classes),
                       line_no);
    }
    labels.push_back(*y);
  }
  if (labels.empty()) throw ParseError("table has no data rows", line_no);

  Table t;
  t.features = Matrix(labels.size(), width - 1);
  std::copy(values.begin(), values.end(), t.features.values().begin());
  t.labels = std::move(labels);
  t.num_classes = options.num_classes.value_or(*std::max_element(t.labels.begin(), t.labels.end()) + 1);
  if (t.num_classes < 2) throw ParseError("table needs at least 2 classes", 0);
  return t;
}

DatasetSplit ingest_table(const std::filesystem::path& path, const IngestOptions& options) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  const Table table = read_table_csv(is, options.csv);
  const SplitPlan plan = options.plan.value_or(SplitPlan::from_fractions(
      table.labels.size(), options.val_fraction, options.test_fraction));
  return split_table(table, plan, options.seed);
}

nlohmann::json to_json(const SyntheticSpec& spec) {
  return {{"num_classes", spec.num_classes}, {"feature_dim", spec.feature_dim},
          {"means", spec.means},             {"sigma", spec.sigma},
          {"priors", spec.priors},           {"seed", spec.seed},
          {"n_train", spec.n_train},         {"n_val", spec.n_val},
          {"n_test", spec.n_test}};
}

SyntheticSpec spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  s.num_classes = j.at("num_classes").get<std::size_t>();
  s.feature_dim = j.at("feature_dim").get<std::size_t>();
  s.means = j.at("means").get<std::vector<std::vector<double>>>();
  s.sigma = j.at("sigma").get<double>();
  s.priors = j.at("priors").get<std::vector<double>>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.n_train = j.at("n_train").get<std::size_t>();
  s.n_val = j.at("n_val").get<std::size_t>();
  s.n_test = j.at("n_test").get<std::size_t>();
  s.validate();
  return s;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << bytes;
  if (!os) throw Error("failed writing " + path.string());
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const Table& table, const SplitPlan& plan,
                  std::uint64_t split_seed, const std::optional<SyntheticSpec>& spec) {
  std::filesystem::create_directories(dir);
  std::ostringstream csv;
  write_table_csv(csv, table);
  const std::string data = csv.str();

  const DatasetSplit split = split_table(table, plan, split_seed);
  nlohmann::json m = {{"format_version", 1},
                      {"data_file", "data.csv"},
                      {"data_fnv1a64", fnv1a_hex(data)},
                      {"num_classes", table.num_classes},
                      {"feature_dim", table.features.cols()},
                      {"n_total", table.labels.size()},
                      {"n_train", split.train.labels.size()},
                      {"n_val", plan.n_val},
                      {"n_test", plan.n_test},
                      {"split_seed", split_seed},
                      {"class_train_counts", split.class_train_counts},
                      {"synthetic", spec ? to_json(*spec) : nlohmann::json(nullptr)}};
  write_file(dir / "data.csv", data);
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

DatasetFiles load_dataset(const std::filesystem::path& dir) {
  const std::string manifest_text = read_file(dir / "manifest.json");
  DatasetFiles out;
  try {
    out.manifest = nlohmann::json::parse(manifest_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest.json: ") + e.what(), 0);
  }
  out.manifest_hash = fnv1a_hex(manifest_text);
  const auto& m = out.manifest;
  const std::string data = read_file(dir / m.at("data_file").get<std::string>());
  if (fnv1a_hex(data) != m.at("data_fnv1a64").get<std::string>()) {
    throw InvalidData("data file does not match the manifest checksum");
  }
  std::istringstream is(data);
  CsvOptions csv;
  csv.num_classes = m.at("num_classes").get<std::size_t>();
  const Table table = read_table_csv(is, csv);
  if (table.features.cols() != m.at("feature_dim").get<std::size_t>()) {
    throw InvalidData("feature dimension differs from the manifest");
  }
  const SplitPlan plan{m.at("n_val").get<std::size_t>(), m.at("n_test").get<std::size_t>()};
  out.split = split_table(table, plan, m.at("split_seed").get<std::uint64_t>());
  if (!m.at("synthetic").is_null()) out.spec = spec_from_json(m.at("synthetic"));
  return out;
}

}  // namespace avgk
