#include "ptl/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ptl/core.hpp"
#include "ptl/dictlearn.hpp"
#include "ptl/genmodel.hpp"
#include "ptl/stability.hpp"
#include "ptl/transfer.hpp"

namespace ptl::cli {

using json = nlohmann::ordered_json;

ConfigError::ConfigError(std::size_t line, std::size_t column, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                         ": " + what),
      line_(line),
      column_(column) {}

// ---------------------------------------------------------------- FlatConfig

void FlatConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

bool FlatConfig::has(const std::string& key) const { return values_.count(key) > 0; }

const std::string* FlatConfig::raw(const std::string& key) {
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  read_.insert(key);
  return &it->second;
}

namespace {

std::optional<double> to_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::string FlatConfig::text(const std::string& key, const std::string& fallback) {
  const std::string* r = raw(key);
  const std::string v = r ? *r : fallback;
  resolved_[key] = v;
  return v;
}

double FlatConfig::real(const std::string& key, std::optional<double> fallback) {
  const std::string* r = raw(key);
  double v;
  if (!r) {
    if (!fallback) throw ParamError(key, "required parameter is missing");
    v = *fallback;
  } else {
    const auto parsed = to_double(*r);
    if (!parsed || !std::isfinite(*parsed)) throw ParamError(key, "not a finite number: '" + *r + "'");
    v = *parsed;
  }
  resolved_[key] = v;
  return v;
}

std::optional<double> FlatConfig::maybe_real(const std::string& key) {
  if (!has(key)) return std::nullopt;
  return real(key);
}

std::int64_t FlatConfig::integer(const std::string& key, std::optional<std::int64_t> fallback) {
  const std::string* r = raw(key);
  std::int64_t v = 0;
  if (!r) {
    if (!fallback) throw ParamError(key, "required parameter is missing");
    v = *fallback;
  } else {
    const auto [ptr, ec] = std::from_chars(r->data(), r->data() + r->size(), v);
    if (ec != std::errc() || ptr != r->data() + r->size()) {
      throw ParamError(key, "not an integer: '" + *r + "'");
    }
  }
  resolved_[key] = v;
  return v;
}

bool FlatConfig::flag(const std::string& key, bool fallback) {
  const std::string* r = raw(key);
  bool v = fallback;
  if (r) {
    if (*r == "true" || *r == "1") {
      v = true;
    } else if (*r == "false" || *r == "0") {
      v = false;
    } else {
      throw ParamError(key, "expected true or false, got '" + *r + "'");
    }
  }
  resolved_[key] = v;
  return v;
}

std::vector<double> FlatConfig::reals(const std::string& key, std::vector<double> fallback) {
  const std::string* r = raw(key);
  std::vector<double> v = std::move(fallback);
  if (r) {
    v.clear();
    std::string_view rest(*r);
    while (true) {
      const auto comma = rest.find(',');
      const std::string_view item = trim(rest.substr(0, comma));
      const auto parsed = to_double(item);
      if (!parsed || !std::isfinite(*parsed)) {
        throw ParamError(key, "bad list entry '" + std::string(item) + "'");
      }
      v.push_back(*parsed);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
  }
  resolved_[key] = v;
  return v;
}

std::vector<std::string> FlatConfig::unread() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!read_.count(k)) out.push_back(k);
  }
  return out;
}

FlatConfig parse_config(std::string_view text) {
  FlatConfig cfg;
  std::size_t line_no = 0;
  while (!text.empty() || line_no == 0) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string_view::npos) {
      if (text.empty()) break;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(line_no, start + 1, "expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(line_no, eq + 1, "missing key before '='");
    for (std::size_t i = 0; i < key.size(); ++i) {
      const char c = key[i];
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) {
        throw ConfigError(line_no, start + i + 1, std::string("invalid character '") + c + "' in key");
      }
    }
    const std::string_view value = trim(line.substr(eq + 1));
    if (value.empty()) throw ConfigError(line_no, eq + 2, "missing value after '='");
    const std::string k(key);
    if (cfg.has(k)) throw ConfigError(line_no, start + 1, "duplicate key '" + k + "'");
    cfg.set(k, std::string(value));
    if (text.empty()) break;
  }
  return cfg;
}

ExperimentConfig make_config(FlatConfig params, std::optional<std::string> command,
                             std::optional<std::uint64_t> seed, std::optional<std::string> output,
                             std::optional<std::size_t> trials) {
  ExperimentConfig c;
  auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = params.entries().find(key);
    if (it == params.entries().end()) return std::nullopt;
    return it->second;
  };
  auto strip = [&](const std::string& key) {
    FlatConfig rest;
    for (const auto& [k, v] : params.entries()) {
      if (k != key) rest.set(k, v);
    }
    params = std::move(rest);
  };

  c.command = command ? *command : take("command").value_or("");
  strip("command");
  if (seed) {
    c.seed = *seed;
  } else if (auto s = take("seed")) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
    if (ec != std::errc() || ptr != s->data() + s->size()) throw ParamError("seed", "not an unsigned 64-bit integer");
    c.seed = v;
  }
  strip("seed");
  c.output_path = output ? *output : take("output").value_or("");
  strip("output");
  if (trials) {
    c.trials = trials;
  } else if (auto t = take("trials")) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(t->data(), t->data() + t->size(), v);
    if (ec != std::errc() || ptr != t->data() + t->size()) throw ParamError("trials", "not a count");
    c.trials = v;
  }
  strip("trials");
  c.params = std::move(params);
  return c;
}

// ----------------------------------------------------------------- RunResult

std::string RunResult::body() const {
  std::string out = config.dump() + '\n';
  for (const auto& r : records) out += r.dump() + '\n';
  for (const auto& row : summary_rows) {
    json s = json::object();
    s["kind"] = "summary";
    for (std::size_t i = 0; i < row.size(); ++i) s[summary_columns[i]] = row[i];
    out += s.dump() + '\n';
  }
  return out;
}

namespace {

std::string cell(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

}  // namespace

std::string RunResult::summary_csv() const {
  std::string out;
  for (std::size_t i = 0; i < summary_columns.size(); ++i) {
    out += (i ? "," : "") + summary_columns[i];
  }
  out += '\n';
  for (const auto& row : summary_rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + cell(row[i]);
    out += '\n';
  }
  return out;
}

std::string RunResult::summary_table() const {
  std::vector<std::size_t> width(summary_columns.size());
  for (std::size_t i = 0; i < summary_columns.size(); ++i) width[i] = summary_columns[i].size();
  for (const auto& row : summary_rows) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], cell(row[i]).size());
  }
  std::ostringstream os;
  auto emit = [&](auto get) {
    for (std::size_t i = 0; i < width.size(); ++i) {
      os << (i ? "  " : "") << std::setw(static_cast<int>(width[i])) << get(i);
    }
    os << '\n';
  };
  emit([&](std::size_t i) { return summary_columns[i]; });
  for (const auto& row : summary_rows) emit([&](std::size_t i) { return cell(row[i]); });
  return os.str();
}

// ------------------------------------------------------------------ commands

namespace {

constexpr std::uint64_t kDictionaryStream = std::uint64_t{1} << 62;
constexpr std::uint64_t kSampleStream = kDictionaryStream + 1;

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ParamError(key, what);
}

Dictionary resolve_dictionary(FlatConfig& c, std::uint64_t seed) {
  const std::string kind = c.text("dictionary.kind", "identity_hadamard");
  if (kind == "file") {
    const std::string path = c.text("dictionary.path", "");
    require(!path.empty(), "dictionary.path", "required when dictionary.kind = file");
    try {
      return load_dictionary(path);
    } catch (const std::exception& e) {
      throw ParamError("dictionary.path", e.what());
    }
  }
  const std::int64_t d = c.integer("dictionary.d", 64);
  const std::int64_t m = c.integer("dictionary.m", 16);
  require(d >= 1, "dictionary.d", "must be at least 1");
  require(m >= 1, "dictionary.m", "must be at least 1");
  CounterRng rng(seed, kDictionaryStream);
  if (kind == "identity_hadamard") {
    require((d & (d - 1)) == 0, "dictionary.d", "must be a power of two for identity_hadamard");
    require(m <= 2 * d, "dictionary.m", "must be at most 2d for identity_hadamard");
    return identity_hadamard_dictionary(d, m);
  }
  if (kind == "gaussian") return random_gaussian_dictionary(d, m, rng);
  if (kind == "orthonormal") {
    require(m <= d, "dictionary.m", "must be at most d for orthonormal");
    return random_orthonormal_dictionary(d, m, rng);
  }
  throw ParamError("dictionary.kind", "unknown kind '" + kind + "'");
}

GenModelParams resolve_genmodel(FlatConfig& c, const Dictionary& dict) {
  const std::int64_t k = c.integer("genmodel.k", 2);
  require(k >= 0 && k <= dict.size(), "genmodel.k", "must lie in [0, m]");
  const double C = c.real("genmodel.C", 1.0);
  require(C > 0, "genmodel.C", "must be positive");
  const double amp_max = c.real("genmodel.amp_max", 2 * C);
  require(amp_max >= C, "genmodel.amp_max", "must be at least genmodel.C");
  const double sigma = c.real("genmodel.sigma", 0.1);
  require(sigma >= 0, "genmodel.sigma", "must be nonnegative");
  const double t = c.real("genmodel.t", 0.5);
  require(t > 0 && t < 1, "genmodel.t", "must lie in (0, 1)");
  const double tau = c.real("genmodel.tau", 0.25);
  require(tau > 0, "genmodel.tau", "must be positive");
  const std::optional<double> lambda = c.maybe_real("genmodel.lambda");
  if (lambda) require(*lambda > 0, "genmodel.lambda", "must be positive");
  const std::string noise = c.text("genmodel.noise", "gaussian");
  require(noise == "gaussian" || noise == "uniform", "genmodel.noise", "must be gaussian or uniform");

  GenModelParams p(dict, k, C, sigma, t, tau, lambda);
  p.amp_max = amp_max;
  p.noise = noise == "gaussian" ? NoiseFamily::Gaussian : NoiseFamily::BoundedUniform;
  return p;
}

TransferConfig resolve_transfer(FlatConfig& c, double lambda) {
  const std::string loss_text = c.text("transfer.loss", "absolute");
  LossKind kind;
  try {
    kind = parse_loss(loss_text);
  } catch (const std::exception&) {
    throw ParamError("transfer.loss", "must be absolute, hinge or squared");
  }
  Loss loss{kind, 1.0};
  if (kind == LossKind::Squared) {
    loss.lipschitz = c.real("transfer.lipschitz");
  } else {
    loss.lipschitz = c.real("transfer.lipschitz", 1.0);
  }
  require(loss.lipschitz > 0, "transfer.lipschitz", "must be positive");
  const double R_x = c.real("transfer.R_x", 1.0);
  require(R_x > 0, "transfer.R_x", "must be positive");
  const double R_W = c.real("transfer.R_W", 1.0);
  require(R_W > 0, "transfer.R_W", "must be positive");
  const double delta = c.real("transfer.delta", 0.1);
  require(delta > 0 && delta < 1, "transfer.delta", "must lie in (0, 1)");
  const double delta_bar = c.real("transfer.delta_bar", 0.0);
  require(delta_bar >= 0 && delta_bar < 1, "transfer.delta_bar", "must lie in [0, 1)");
  const std::int64_t n = c.integer("transfer.n", 200);
  require(n >= 1, "transfer.n", "must be at least 1");
  const std::int64_t N = c.integer("transfer.N", 0);
  require(N >= 0, "transfer.N", "must be nonnegative");

  TransferConfig cfg = make_transfer_config(loss, lambda, R_x, R_W, delta,
                                            static_cast<std::size_t>(n),
                                            static_cast<std::size_t>(N), delta_bar);
  if (auto rho = c.maybe_real("transfer.rho")) {
    require(*rho > 0, "transfer.rho", "must be positive");
    cfg.rho = *rho;
    cfg.auto_rho = false;
  }
  return cfg;
}

json regime_json(const RegimeFlags& f) {
  json j = json::object();
  j["dimension"] = f.dimension;
  j["tau_range"] = f.tau_range;
  j["lambda_matches"] = f.lambda_matches;
  j["lambda_upper"] = f.lambda_upper;
  j["incoherent"] = f.incoherent;
  return j;
}

json record(const char* kind) {
  json j = json::object();
  j["kind"] = kind;
  return j;
}

// Runs `f`, relabelling any failure with the stage name.
template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const PipelineError& e) {
    throw StageError(name + "/" + e.stage(), e.what());
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

// Resolution happens first and only raises ParamError; the returned closure
// does the work.
using Job = std::function<void(RunResult&)>;

Job plan_stability(FlatConfig& c, std::uint64_t seed, std::size_t trials) {
  const Dictionary dict = resolve_dictionary(c, seed);
  const GenModelParams gen = resolve_genmodel(c, dict);
  require(gen.k < dict.size(), "genmodel.k", "must be smaller than m for the margin");
  const double lambda = c.real("stability.lambda", gen.lambda);
  require(lambda > 0, "stability.lambda", "must be positive");
  const std::vector<double> grid = c.reals("stability.eps_grid", {0.0, 0.25, 0.5, 1.0});
  const std::string mode = c.text("stability.eps_mode", "relative");
  require(mode == "relative" || mode == "absolute", "stability.eps_mode", "must be relative or absolute");
  for (double e : grid) {
    require(e >= 0, "stability.eps_grid", "entries must be nonnegative");
    if (mode == "absolute") require(e <= 2, "stability.eps_grid", "absolute entries must be at most 2");
  }
  const std::int64_t n_samples = c.integer("stability.samples", 20);
  require(n_samples >= 1, "stability.samples", "must be at least 1");
  const double tol = c.real("stability.tol", 1e-12);
  require(tol > 0, "stability.tol", "must be positive");
  require(trials >= 1, "trials", "must be at least 1");

  return [=](RunResult& out) {
    std::vector<Vector> samples = stage("samples", [&] {
      CounterRng rng(seed, kSampleStream);
      std::vector<Vector> s;
      for (std::int64_t i = 0; i < n_samples; ++i) s.push_back(sample(gen, rng).x);
      return s;
    });
    StabilityOptions opts;
    opts.mode = mode == "relative" ? EpsMode::RelativeToRadius : EpsMode::Absolute;
    opts.tol = tol;
    const auto reports = stage("verify", [&] {
      return verify_stability(dict, samples, gen.k, lambda, grid, static_cast<int>(trials), seed, opts);
    });
    for (const auto& r : reports) {
      json j = record("trial");
      j["sample"] = r.sample_index;
      j["eps_index"] = r.eps_index;
      j["trial"] = r.trial;
      j["stream"] = r.stream;
      j["eps"] = r.eps;
      j["margin"] = r.margin;
      j["permissible_radius"] = r.permissible_radius;
      j["dict_distance"] = r.dict_distance;
      j["code_distance"] = r.code_distance;
      j["bound"] = r.bound_value;
      j["support_diff"] = r.support_diff_size;
      j["within_regime"] = r.within_regime;
      j["stability_violated"] = r.ok() && r.stability_violated();
      j["sparsity_violated"] = r.ok() && r.sparsity_violated(gen.k);
      j["value_violated"] = r.ok() && r.value_violated();
      j["reconstructor_violated"] = r.ok() && r.reconstructor_violated();
      j["error"] = r.error;
      out.records.push_back(std::move(j));
    }
    out.summary_columns = {"eps",   "trials", "failed", "in_regime", "stability_violations",
                           "sparsity_violations", "value_violations",
                           "reconstructor_violations", "all_pass"};
    for (std::size_t e = 0; e < grid.size(); ++e) {
      std::vector<StabilityReport> slice;
      for (const auto& r : reports) {
        if (r.eps_index == e) slice.push_back(r);
      }
      const StabilityTally t = tally(slice, gen.k);
      out.summary_rows.push_back({grid[e], t.trials, t.failed, t.in_regime, t.stability_violations,
                                  t.sparsity_violations, t.value_violations,
                                  t.reconstructor_violations,
                                  t.total_violations() == 0 && t.failed == 0});
    }
  };
}

MonteCarloOptions resolve_mc(FlatConfig& c, const GenModelParams& gen) {
  MonteCarloOptions o;
  o.require_regime = c.flag("genmodel.require_regime", true);
  if (o.require_regime && !regime(gen).dimension) {
    throw ParamError("dictionary.d", "dimension condition d >= ((1 + 6/(1-t)) mu k)^2 fails; "
                                     "set genmodel.require_regime = false to run anyway");
  }
  return o;
}

Job plan_margin(FlatConfig& c, std::uint64_t seed, std::size_t trials) {
  const Dictionary dict = resolve_dictionary(c, seed);
  const GenModelParams gen = resolve_genmodel(c, dict);
  require(gen.k < dict.size(), "genmodel.k", "must be smaller than m");
  const MonteCarloOptions opts = resolve_mc(c, gen);

  return [=](RunResult& out) {
    const MarginMonteCarlo mc = stage("montecarlo", [&] { return margin_montecarlo(gen, trials, seed, opts); });
    for (const auto& t : mc.per_trial) {
      json j = record("trial");
      j["trial"] = t.trial;
      j["margin"] = t.margin;
      j["failed"] = t.failed;
      j["excluded"] = t.excluded;
      out.records.push_back(std::move(j));
    }
    out.summary_columns = {"d",     "m",       "k",        "tau",      "lambda",   "sigma",
                           "t",     "mu",      "delta",    "trials",   "excluded", "failures",
                           "rate",  "wilson_lo", "wilson_hi", "regime_all"};
    out.summary_rows.push_back({gen.dim(), gen.size(), gen.k, gen.tau, gen.lambda, gen.sigma, gen.t,
                                gen.mu, mc.delta, mc.trials, mc.excluded, mc.failures,
                                mc.rate ? json(*mc.rate) : json(nullptr), mc.wilson.lo,
                                mc.wilson.hi, mc.regime.all()});
    json r = record("regime");
    r["flags"] = regime_json(mc.regime);
    out.records.push_back(std::move(r));
  };
}

Job plan_lemmas(FlatConfig& c, std::uint64_t seed, std::size_t trials) {
  const Dictionary dict = resolve_dictionary(c, seed);
  const GenModelParams gen = resolve_genmodel(c, dict);
  require(gen.k < dict.size(), "genmodel.k", "must be smaller than m");
  const MonteCarloOptions opts = resolve_mc(c, gen);

  return [=](RunResult& out) {
    const LemmaReport rep = stage("lemmas", [&] { return lemma_checks(gen, trials, seed, opts); });
    static const char* names[4] = {"noise_correlation", "code_error", "sign_consistency",
                                   "support_of_difference"};
    out.summary_columns = {"lemma", "trials", "excluded", "holds", "rate", "bound", "se",
                           "within_tolerance", "out_of_regime"};
    for (std::size_t i = 0; i < 4; ++i) {
      const LemmaRate& l = rep.lemmas[i];
      json j = record("lemma");
      j["lemma"] = names[i];
      j["holds"] = l.holds;
      j["rate"] = l.rate;
      j["bound"] = l.bound;
      j["se"] = l.se;
      out.records.push_back(std::move(j));
      out.summary_rows.push_back({names[i], rep.trials, rep.excluded, l.holds, l.rate, l.bound,
                                  l.se, l.within_tolerance, rep.out_of_regime});
    }
    json r = record("regime");
    r["flags"] = regime_json(rep.regime);
    r["delta2"] = rep.delta2;
    r["delta3"] = rep.delta3;
    out.records.push_back(std::move(r));
  };
}

Job plan_dictlearn(FlatConfig& c, std::uint64_t seed, std::size_t trials) {
  const Dictionary dict = resolve_dictionary(c, seed);
  const GenModelParams gen = resolve_genmodel(c, dict);
  const std::int64_t N = c.integer("dictlearn.N", 200);
  require(N >= 1, "dictlearn.N", "must be at least 1");
  const std::int64_t rounds = c.integer("dictlearn.rounds", 20);
  require(rounds >= 1, "dictlearn.rounds", "must be at least 1");
  const double lambda = c.real("dictlearn.lambda", gen.lambda);
  require(lambda > 0, "dictlearn.lambda", "must be positive");
  require(trials >= 1, "trials", "must be at least 1");

  return [=](RunResult& out) {
    double sum = 0.0, worst = 0.0;
    for (std::size_t r = 0; r < trials; ++r) {
      const DictEstimate est = stage("learn", [&] {
        CounterRng rng(seed, r);
        Matrix samples(gen.dim(), N);
        for (Index j = 0; j < N; ++j) samples.col(j) = sample(gen, rng).x;
        LearnOptions lo;
        lo.truth = gen.dictionary;
        return learn_alternating(samples, gen.size(), lambda, static_cast<int>(rounds), rng, lo);
      });
      json j = record("trial");
      j["trial"] = r;
      j["error_to_truth"] = *est.error_to_truth;
      j["objective_trace"] = est.objective_trace;
      j["events"] = est.events;
      out.records.push_back(std::move(j));
      sum += *est.error_to_truth;
      worst = std::max(worst, *est.error_to_truth);
    }
    out.summary_columns = {"d", "m", "N", "rounds", "lambda", "trials", "mean_error", "max_error"};
    out.summary_rows.push_back({gen.dim(), gen.size(), N, rounds, lambda, trials,
                                sum / static_cast<double>(trials), worst});
  };
}

json bound_json(const BoundBreakdown& b) {
  json j = json::object();
  j["term_fast_rate"] = b.term_fast_rate;
  j["term_linear"] = b.term_linear;
  j["term_sqrt"] = b.term_sqrt;
  j["total"] = b.total;
  j["L_psi"] = b.L_psi_used;
  j["term_fast_rate_derived"] = b.term_fast_rate_derived;
  j["term_linear_derived"] = b.term_linear_derived;
  return j;
}

Job plan_transfer(FlatConfig& c, std::uint64_t seed, std::size_t trials) {
  const Dictionary dict = resolve_dictionary(c, seed);
  const GenModelParams gen = resolve_genmodel(c, dict);
  const TransferConfig cfg = resolve_transfer(c, gen.lambda);
  std::vector<double> w = c.reals("transfer.w_true", {0.6, 0.3});
  require(static_cast<Index>(w.size()) <= dict.size(), "transfer.w_true", "has more entries than m");
  LabelRule rule;
  rule.w_true = Vector::Zero(dict.size());
  for (std::size_t i = 0; i < w.size(); ++i) rule.w_true(static_cast<Index>(i)) = w[i];
  require(rule.w_true.norm() <= cfg.R_W, "transfer.w_true", "must lie in the R_W ball");
  rule.noise_bound = c.real("transfer.label_noise", 0.0);
  require(rule.noise_bound >= 0, "transfer.label_noise", "must be nonnegative");
  const std::string src_text = c.text("transfer.dict_source", "oracle");
  require(src_text == "oracle" || src_text == "learned", "transfer.dict_source", "must be oracle or learned");
  DictSource src;
  src.kind = src_text == "oracle" ? DictSource::Kind::Oracle : DictSource::Kind::Learned;
  src.rounds = static_cast<int>(c.integer("transfer.rounds", 20));
  require(src.rounds >= 1, "transfer.rounds", "must be at least 1");
  if (src.kind == DictSource::Kind::Learned) require(cfg.N >= 1, "transfer.N", "must be positive for a learned dictionary");
  const std::vector<double> errors = src.kind == DictSource::Kind::Oracle
                                         ? c.reals("transfer.dict_error", {0.0})
                                         : std::vector<double>{0.0};
  for (double e : errors) require(e >= 0 && e <= 2, "transfer.dict_error", "entries must lie in [0, 2]");
  PipelineOptions po;
  po.heldout = static_cast<std::size_t>(c.integer("transfer.heldout", 5000));
  require(po.heldout >= 1, "transfer.heldout", "must be at least 1");
  po.oversize = static_cast<std::size_t>(c.integer("transfer.oversize", 50));
  require(po.oversize >= 1, "transfer.oversize", "must be at least 1");
  require(trials >= 1, "trials", "must be at least 1");
  try {
    stability_coefficient(gen.mu, gen.dim(), cfg.R_x, gen.k, cfg.lambda);
  } catch (const std::exception& e) {
    throw ParamError("genmodel.k", e.what());
  }

  return [=](RunResult& out) {
    out.summary_columns = {"dict_error", "runs",          "in_regime", "dominated",
                           "dominated_in_regime", "mean_excess", "max_excess", "bound_total",
                           "max_wstar_approx_error", "max_reference_gap"};
    for (std::size_t e = 0; e < errors.size(); ++e) {
      DictSource s = src;
      s.oracle_error = errors[e];
      std::size_t in_regime = 0, dominated = 0, dominated_in = 0;
      double sum = 0.0, worst = -std::numeric_limits<double>::infinity(), total = 0.0;
      double approx = 0.0, ref_gap = 0.0;
      for (std::size_t r = 0; r < trials; ++r) {
        const ExperimentReport rep = stage("pipeline", [&] {
          CounterRng rng(seed, e * trials + r);
          return run_pipeline(gen, rule, cfg, s, rng, po);
        });
        json j = record("trial");
        j["point"] = e;
        j["run"] = r;
        j["requested_error"] = errors[e];
        j["dict_error"] = rep.dict_error;
        j["min_radius"] = rep.min_radius;
        j["in_regime"] = rep.in_regime;
        j["erm_gap"] = rep.erm_gap;
        j["risk_hat"] = rep.risk_hat;
        j["risk_star"] = rep.risk_star;
        j["risk_reference"] = rep.risk_reference;
        j["risk_rule"] = rep.risk_rule;
        j["reference_gap"] = rep.reference_gap;
        j["wstar_approx_error"] = rep.wstar_approx_error;
        j["excess"] = rep.excess;
        j["bound"] = bound_json(rep.bound);
        j["dominated"] = rep.dominated();
        out.records.push_back(std::move(j));
        in_regime += rep.in_regime;
        dominated += rep.dominated();
        dominated_in += rep.in_regime && rep.dominated();
        sum += rep.excess;
        worst = std::max(worst, rep.excess);
        total = rep.bound.total;
        approx = std::max(approx, rep.wstar_approx_error);
        ref_gap = std::max(ref_gap, rep.reference_gap);
      }
      out.summary_rows.push_back({errors[e], trials, in_regime, dominated, dominated_in,
                                  sum / static_cast<double>(trials), worst, total, approx, ref_gap});
    }
  };
}

Job plan_bound(FlatConfig& c, std::uint64_t seed, std::size_t) {
  const Dictionary dict = resolve_dictionary(c, seed);
  const GenModelParams gen = resolve_genmodel(c, dict);
  const TransferConfig cfg = resolve_transfer(c, gen.lambda);
  const std::vector<double> errors = c.reals("bound.dict_error", {0.0, 1e-5, 1e-4, 1e-3});
  for (double e : errors) require(e >= 0, "bound.dict_error", "entries must be nonnegative");
  double L_psi;
  if (auto given = c.maybe_real("bound.L_psi")) {
    require(*given >= 0, "bound.L_psi", "must be nonnegative");
    L_psi = *given;
  } else {
    try {
      L_psi = stability_coefficient(gen.mu, gen.dim(), cfg.R_x, gen.k, cfg.lambda);
    } catch (const std::exception& e) {
      throw ParamError("genmodel.k", e.what());
    }
  }

  return [=](RunResult& out) {
    out.summary_columns = {"dict_error", "n", "rho", "L_psi", "term_fast_rate", "term_linear",
                           "term_sqrt", "total", "term_fast_rate_derived", "term_linear_derived"};
    for (double e : errors) {
      const BoundBreakdown b = stage("bound", [&] { return excess_bound(cfg, e, L_psi); });
      json j = record("point");
      j["dict_error"] = e;
      j["bound"] = bound_json(b);
      out.records.push_back(std::move(j));
      out.summary_rows.push_back({e, cfg.n, cfg.rho, b.L_psi_used, b.term_fast_rate, b.term_linear,
                                  b.term_sqrt, b.total, b.term_fast_rate_derived,
                                  b.term_linear_derived});
    }
  };
}

// Every key some command reads. A config file may carry keys for other
// commands; anything outside this list is a typo.
const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "bound.L_psi", "bound.dict_error", "dictionary.d", "dictionary.kind",
      "dictionary.m", "dictionary.path", "dictlearn.N", "dictlearn.lambda",
      "dictlearn.rounds", "genmodel.C", "genmodel.amp_max", "genmodel.k",
      "genmodel.lambda", "genmodel.noise", "genmodel.require_regime", "genmodel.sigma",
      "genmodel.t", "genmodel.tau", "stability.eps_grid", "stability.eps_mode",
      "stability.lambda", "stability.samples", "stability.tol", "transfer.N",
      "transfer.R_W", "transfer.R_x", "transfer.delta", "transfer.delta_bar",
      "transfer.dict_error", "transfer.dict_source", "transfer.heldout", "transfer.label_noise",
      "transfer.lipschitz", "transfer.loss", "transfer.n", "transfer.oversize",
      "transfer.rho", "transfer.rounds", "transfer.w_true"};
  return keys;
}

std::size_t default_trials(const std::string& command) {
  if (command == "stability") return 5;
  if (command == "margin" || command == "lemmas") return 1000;
  if (command == "transfer") return 10;
  return 1;
}

}  // namespace

RunResult execute(ExperimentConfig config) {
  const auto& names = commands();
  if (std::find(names.begin(), names.end(), config.command) == names.end()) {
    throw ParamError("command", config.command.empty() ? "no command given"
                                                       : "unknown command '" + config.command + "'");
  }
  const std::size_t trials = config.trials.value_or(default_trials(config.command));
  FlatConfig& c = config.params;

  Job job;
  try {
    if (config.command == "stability") job = plan_stability(c, config.seed, trials);
    if (config.command == "margin") job = plan_margin(c, config.seed, trials);
    if (config.command == "lemmas") job = plan_lemmas(c, config.seed, trials);
    if (config.command == "dictlearn") job = plan_dictlearn(c, config.seed, trials);
    if (config.command == "transfer") job = plan_transfer(c, config.seed, trials);
    if (config.command == "bound") job = plan_bound(c, config.seed, trials);
  } catch (const ParamError&) {
    throw;
  } catch (const std::exception& e) {
    // A module rejected a combination the checks above let through.
    throw ParamError(config.command, e.what());
  }
  for (const auto& key : c.unread()) {
    if (!known_keys().count(key)) throw ParamError(key, "unknown parameter");
  }

  RunResult out;
  out.config = record("config");
  out.config["command"] = config.command;
  out.config["seed"] = config.seed;
  out.config["rng"] = std::string(CounterRng::kAlgorithm);
  out.config["trials"] = trials;
  out.config["params"] = c.resolved();
  job(out);
  return out;
}

namespace {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

int run(ExperimentConfig config, std::ostream& out, std::ostream& err) {
  try {
    const std::string path = config.output_path;
    if (path.empty()) throw ParamError("output", "no output path given");
    const RunResult result = execute(std::move(config));
    std::ofstream report(path);
    if (!report) throw StageError("write", "cannot open " + path);
    json header = record("header");
    header["timestamp"] = utc_timestamp();
    report << header.dump() << '\n' << result.body();
    std::ofstream csv(path + ".summary.csv");
    if (!csv) throw StageError("write", "cannot open " + path + ".summary.csv");
    csv << result.summary_csv();
    if (!report || !csv) throw StageError("write", "write failed");
    out << result.summary_table();
    return 0;
  } catch (const ParamError& e) {
    err << "error: invalid parameter " << e.what() << '\n';
    return 3;
  } catch (const StageError& e) {
    err << "error: runtime failure in stage " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: runtime failure in stage run: " << e.what() << '\n';
    return 1;
  }
}

int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse-coding transfer experiments"};
  std::string config_path, command, output;
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  app.add_option("--config", config_path, "Config file with dotted key = value lines");
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every random stream");
  auto* out_opt = app.add_option("--out", output, "Report path; the summary goes to <out>.summary.csv");
  auto* trials_opt = app.add_option("--trials", trials, "Number of trials");
  auto* command_opt = app.add_option("--command", command, "stability, margin, lemmas, dictlearn, transfer or bound");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  FlatConfig params;
  if (!config_path.empty()) {
    std::ifstream is(config_path);
    if (!is) {
      err << "error: cannot read config " << config_path << '\n';
      return 2;
    }
    std::stringstream ss;
    ss << is.rdbuf();
    try {
      params = parse_config(ss.str());
    } catch (const ConfigError& e) {
      err << "error: " << config_path << ": " << e.what() << '\n';
      return 2;
    }
  }
  try {
    ExperimentConfig cfg = make_config(
        std::move(params), *command_opt ? std::optional(command) : std::nullopt,
        *seed_opt ? std::optional(seed) : std::nullopt,
        *out_opt ? std::optional(output) : std::nullopt,
        *trials_opt ? std::optional(trials) : std::nullopt);
    return run(std::move(cfg), out, err);
  } catch (const ParamError& e) {
    err << "error: invalid parameter " << e.what() << '\n';
    return 3;
  }
}

}  // namespace ptl::cli
