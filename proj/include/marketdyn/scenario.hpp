#pragma once

// Scenario documents (JSON), model dispatch, metric tables and CSV output.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "marketdyn/competition.hpp"
#include "marketdyn/error.hpp"
#include "marketdyn/feedback.hpp"
#include "marketdyn/games.hpp"
#include "marketdyn/monopoly.hpp"
#include "marketdyn/numerics.hpp"

namespace marketdyn::scenario {

using json = nlohmann::json;
using numerics::Trajectory;

// ---------------------------------------------------------------------------
// Errors

enum class Issue { unknown_kind, missing_field, wrong_type, unknown_field, invariant_breach };

inline std::string_view to_string(Issue i) {
  switch (i) {
    case Issue::unknown_kind: return "unknown-kind";
    case Issue::missing_field: return "missing-field";
    case Issue::wrong_type: return "wrong-type";
    case Issue::unknown_field: return "unknown-field";
    case Issue::invariant_breach: return "invariant-breach";
  }
  return "invariant-breach";
}

struct FieldError {
  Issue issue = Issue::invariant_breach;
  std::string path;
  std::string expected;
  std::string found;
  friend bool operator==(const FieldError&, const FieldError&) = default;
};

inline std::string describe(const std::vector<FieldError>& errors) {
  std::string out;
  for (const auto& e : errors) {
    if (!out.empty()) out += '\n';
    out += std::string(to_string(e.issue)) + " at " + (e.path.empty() ? "<root>" : e.path) +
           ": expected " + e.expected + ", found " + e.found;
  }
  return out;
}

class ScenarioError : public Error {
 public:
  explicit ScenarioError(std::vector<FieldError> errors)
      : Error(ErrorCode::validation, describe(errors)), errors_(std::move(errors)) {}
  const std::vector<FieldError>& errors() const noexcept { return errors_; }

 private:
  std::vector<FieldError> errors_;
};

// Process exit status for a failure: 2 bad input, 3 numeric failure,
// 4 infeasible calibration.
inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::calibration_infeasible: return 4;
    case ErrorCode::parameter:
    case ErrorCode::validation:
    case ErrorCode::initiation:
    case ErrorCode::inconsistent_spec:
    case ErrorCode::degenerate_market: return 2;
    default: return 3;
  }
}

// ---------------------------------------------------------------------------
// Model descriptions

struct SimpleSpec {
  monopoly::SimpleAdoption model;
  std::optional<double> T50;  // when set, `model.a` was derived from it
  friend bool operator==(const SimpleSpec&, const SimpleSpec&) = default;
};
struct ScheduledSpec {
  monopoly::RateSchedule schedule;
  double u0 = 0.0;
  double N = 1.0;
  friend bool operator==(const ScheduledSpec&, const ScheduledSpec&) = default;
};
struct SegmentedSpec {
  std::vector<monopoly::Segment> segments;
  double N = 1.0;
  friend bool operator==(const SegmentedSpec&, const SegmentedSpec&) = default;
};
struct FeedbackSpec {
  feedback::FeedbackModel model;
  std::optional<double> T50;  // when set, `model.rate` was calibrated from it
  friend bool operator==(const FeedbackSpec&, const FeedbackSpec&) = default;
};
struct CompetitionSpec {
  competition::BassCompetition market;
  competition::ChurnSpec churn;
  friend bool operator==(const CompetitionSpec&, const CompetitionSpec&) = default;
};

using ModelSpec = std::variant<SimpleSpec, ScheduledSpec, SegmentedSpec, monopoly::HesitationParams,
                               monopoly::BirthDeathParams, FeedbackSpec, CompetitionSpec, games::BpqCase,
                               games::ComplementarySpec>;

inline std::string_view kind_name(const ModelSpec& m) {
  static constexpr std::string_view names[] = {"simple",   "scheduled",   "segmented",
                                               "hesitation", "birth_death", "feedback",
                                               "competition", "game",      "complementary"};
  return names[m.index()];
}

struct Scenario {
  std::string name;
  ModelSpec model;
  double horizon = 1.0;
  std::optional<std::size_t> samples;
  std::vector<std::string> outputs;
  std::string time_unit;
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

inline constexpr std::size_t kDefaultSamples = 1000;

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline std::string type_of(const json& v) {
  if (v.is_number()) {
    std::ostringstream os;
    os << v.dump();
    return "number " + os.str();
  }
  if (v.is_string()) return "string \"" + v.get<std::string>() + "\"";
  return v.type_name();
}

inline std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}
inline std::string index(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

enum class Bound { any, positive, nonnegative, share, integer_positive };

inline std::string_view bound_text(Bound b) {
  switch (b) {
    case Bound::any: return "number";
    case Bound::positive: return "number > 0";
    case Bound::nonnegative: return "number >= 0";
    case Bound::share: return "number in [0, 1]";
    case Bound::integer_positive: return "integer >= 2";
  }
  return "number";
}

inline bool within(Bound b, double v) {
  if (!std::isfinite(v)) return false;
  switch (b) {
    case Bound::any: return true;
    case Bound::positive: return v > 0.0;
    case Bound::nonnegative: return v >= 0.0;
    case Bound::share: return v >= 0.0 && v <= 1.0;
    case Bound::integer_positive: return v >= 2.0 && v == std::floor(v);
  }
  return false;
}

class Reader {
 public:
  std::vector<FieldError> errors;

  void fail(Issue issue, std::string path, std::string expected, std::string found) {
    errors.push_back({issue, std::move(path), std::move(expected), std::move(found)});
  }

  bool object(const json& v, const std::string& path) {
    if (v.is_object()) return true;
    fail(Issue::wrong_type, path, "object", type_of(v));
    return false;
  }

  void allow_only(const json& obj, const std::string& path, std::initializer_list<std::string_view> keys) {
    for (const auto& [k, _] : obj.items()) {
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
        std::string list;
        for (auto key : keys) list += (list.empty() ? "" : ", ") + std::string(key);
        fail(Issue::unknown_field, join(path, k), "one of {" + list + "}", "field \"" + k + "\"");
      }
    }
  }

  std::optional<double> number_opt(const json& obj, std::string_view key, const std::string& path,
                                   Bound bound = Bound::any) {
    const auto it = obj.find(std::string(key));
    if (it == obj.end()) return std::nullopt;
    return check_number(*it, join(path, key), bound);
  }

  double number(const json& obj, std::string_view key, const std::string& path, Bound bound,
                std::optional<double> fallback = std::nullopt) {
    const auto it = obj.find(std::string(key));
    if (it == obj.end()) {
      if (fallback) return *fallback;
      fail(Issue::missing_field, join(path, key), std::string(bound_text(bound)), "nothing");
      return 0.0;
    }
    return check_number(*it, join(path, key), bound).value_or(0.0);
  }

  std::optional<double> check_number(const json& v, const std::string& path, Bound bound) {
    if (!v.is_number()) {
      fail(Issue::wrong_type, path, std::string(bound_text(bound)), type_of(v));
      return std::nullopt;
    }
    const double x = v.get<double>();
    if (!within(bound, x)) {
      fail(Issue::invariant_breach, path, std::string(bound_text(bound)), type_of(v));
      return std::nullopt;
    }
    return x;
  }

  std::vector<double> numbers(const json& obj, std::string_view key, const std::string& path, Bound bound,
                              std::optional<std::size_t> size_default = std::nullopt) {
    const auto it = obj.find(std::string(key));
    if (it == obj.end()) {
      if (size_default) return std::vector<double>(*size_default, 0.0);
      fail(Issue::missing_field, join(path, key), "array of " + std::string(bound_text(bound)), "nothing");
      return {};
    }
    return number_array(*it, join(path, key), bound);
  }

  std::vector<double> number_array(const json& v, const std::string& path, Bound bound) {
    if (!v.is_array()) {
      fail(Issue::wrong_type, path, "array of " + std::string(bound_text(bound)), type_of(v));
      return {};
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(check_number(v[i], index(path, i), bound).value_or(0.0));
    return out;
  }

  std::optional<std::string> string_opt(const json& obj, std::string_view key, const std::string& path) {
    const auto it = obj.find(std::string(key));
    if (it == obj.end()) return std::nullopt;
    if (!it->is_string()) {
      fail(Issue::wrong_type, join(path, key), "string", type_of(*it));
      return std::nullopt;
    }
    return it->get<std::string>();
  }

  const json* child(const json& obj, std::string_view key, const std::string& path, bool required = true) {
    const auto it = obj.find(std::string(key));
    if (it == obj.end()) {
      if (required) fail(Issue::missing_field, join(path, key), "value", "nothing");
      return nullptr;
    }
    return &*it;
  }

  // Runs a module-level validation and records its message against `path`.
  template <class F>
  void guard(const std::string& path, F&& check) {
    try {
      check();
    } catch (const Error& e) {
      fail(Issue::invariant_breach, path, "a valid model", e.what());
    }
  }
};

inline monopoly::RateSchedule parse_schedule(Reader& rd, const json& v, const std::string& path) {
  using monopoly::RateSchedule;
  if (v.is_number()) {
    const auto a = rd.check_number(v, path, Bound::nonnegative);
    return RateSchedule::constant(a.value_or(0.0));
  }
  if (!rd.object(v, path)) return RateSchedule::constant(0.0);
  const auto type = rd.string_opt(v, "type", path);
  if (!type) {
    if (!v.contains("type")) rd.fail(Issue::missing_field, join(path, "type"), "schedule type", "nothing");
    return RateSchedule::constant(0.0);
  }
  if (*type == "constant") {
    rd.allow_only(v, path, {"type", "a"});
    return RateSchedule::constant(rd.number(v, "a", path, Bound::nonnegative));
  }
  if (*type == "linear") {
    rd.allow_only(v, path, {"type", "a0", "a1"});
    return RateSchedule::linear(rd.number(v, "a0", path, Bound::nonnegative),
                                rd.number(v, "a1", path, Bound::any));
  }
  if (*type == "exp_decay") {
    rd.allow_only(v, path, {"type", "a0", "beta"});
    return RateSchedule::exp_decay(rd.number(v, "a0", path, Bound::nonnegative),
                                   rd.number(v, "beta", path, Bound::nonnegative));
  }
  if (*type == "cutoff") {
    rd.allow_only(v, path, {"type", "a", "T"});
    return RateSchedule::cutoff(rd.number(v, "a", path, Bound::nonnegative),
                                rd.number(v, "T", path, Bound::nonnegative));
  }
  if (*type == "tabulated") {
    rd.allow_only(v, path, {"type", "points"});
    std::vector<std::pair<double, double>> pts;
    if (const json* p = rd.child(v, "points", path)) {
      const auto ppath = join(path, "points");
      if (!p->is_array()) {
        rd.fail(Issue::wrong_type, ppath, "array of [t, rate] pairs", type_of(*p));
      } else {
        for (std::size_t i = 0; i < p->size(); ++i) {
          const auto pair = rd.number_array((*p)[i], index(ppath, i), Bound::any);
          if (pair.size() != 2) {
            rd.fail(Issue::wrong_type, index(ppath, i), "[t, rate] pair", type_of((*p)[i]));
            continue;
          }
          pts.emplace_back(pair[0], pair[1]);
        }
      }
    }
    return RateSchedule::tabulated(std::move(pts));
  }
  rd.fail(Issue::unknown_kind, join(path, "type"), "constant, linear, exp_decay, cutoff or tabulated",
          "\"" + *type + "\"");
  return RateSchedule::constant(0.0);
}

inline feedback::FeedbackKernel parse_kernel(Reader& rd, const json& v, const std::string& path) {
  using feedback::FeedbackKernel;
  using feedback::KernelKind;
  std::string type;
  const json* obj = nullptr;
  if (v.is_string()) {
    type = v.get<std::string>();
  } else if (rd.object(v, path)) {
    obj = &v;
    const auto t = rd.string_opt(v, "type", path);
    if (!t) {
      if (!v.contains("type")) rd.fail(Issue::missing_field, join(path, "type"), "kernel type", "nothing");
      return FeedbackKernel::none();
    }
    type = *t;
  } else {
    return FeedbackKernel::none();
  }
  const auto kind = feedback::kernel_kind_from_string(type);
  if (!kind) {
    rd.fail(Issue::unknown_kind, obj ? join(path, "type") : path, "a feedback kernel name", "\"" + type + "\"");
    return FeedbackKernel::none();
  }
  const char* param_key = nullptr;
  Bound bound = Bound::positive;
  switch (*kind) {
    case KernelKind::bass: param_key = "ratio"; break;
    case KernelKind::power: param_key = "n"; bound = Bound::nonnegative; break;
    case KernelKind::inverse_u_cutoff: param_key = "u1"; bound = Bound::share; break;
    default: break;
  }
  if (!param_key) {
    if (obj) rd.allow_only(*obj, path, {"type"});
    return {*kind, 0.0};
  }
  if (!obj) {
    rd.fail(Issue::missing_field, join(path, param_key), std::string(bound_text(bound)), "nothing");
    return FeedbackKernel::none();
  }
  rd.allow_only(*obj, path, {"type", param_key});
  return {*kind, rd.number(*obj, param_key, path, bound)};
}

inline competition::ChurnMatrix parse_matrix(Reader& rd, const json& obj, std::string_view key,
                                             const std::string& path) {
  const json* v = rd.child(obj, key, path);
  const auto mpath = join(path, key);
  if (!v) return {};
  if (!v->is_array() || v->empty()) {
    rd.fail(Issue::wrong_type, mpath, "square array of rows", type_of(*v));
    return {};
  }
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < v->size(); ++i) rows.push_back(rd.number_array((*v)[i], index(mpath, i), Bound::nonnegative));
  competition::ChurnMatrix out;
  rd.guard(mpath, [&] { out = competition::ChurnMatrix(rows); });
  return out;
}

inline competition::ChurnSpec parse_churn(Reader& rd, const json& v, const std::string& path) {
  if (!rd.object(v, path)) return std::monostate{};
  const auto type = rd.string_opt(v, "type", path);
  if (!type) {
    if (!v.contains("type")) rd.fail(Issue::missing_field, join(path, "type"), "churn type", "nothing");
    return std::monostate{};
  }
  if (*type == "none") {
    rd.allow_only(v, path, {"type"});
    return std::monostate{};
  }
  if (*type == "spontaneous") {
    rd.allow_only(v, path, {"type", "a"});
    return parse_matrix(rd, v, "a", path);
  }
  if (*type == "stimulated") {
    rd.allow_only(v, path, {"type", "a", "b", "eps"});
    competition::StimulatedChurnSpec s;
    s.churn = parse_matrix(rd, v, "a", path);
    s.b = rd.numbers(v, "b", path, Bound::nonnegative);
    s.eps = rd.numbers(v, "eps", path, Bound::share);
    return s;
  }
  if (*type == "periodic") {
    rd.allow_only(v, path, {"type", "a", "terms"});
    competition::PeriodicChurnSpec s;
    s.a0 = parse_matrix(rd, v, "a", path);
    if (const json* terms = rd.child(v, "terms", path, false)) {
      const auto tpath = join(path, "terms");
      if (!terms->is_array()) rd.fail(Issue::wrong_type, tpath, "array of terms", type_of(*terms));
      for (std::size_t i = 0; terms->is_array() && i < terms->size(); ++i) {
        const auto& t = (*terms)[i];
        const auto ipath = index(tpath, i);
        if (!rd.object(t, ipath)) continue;
        rd.allow_only(t, ipath, {"from", "to", "amplitude", "period", "phase"});
        competition::PeriodicTerm term;
        // Supplier indices are 1-based, as in a12.
        term.from = static_cast<std::size_t>(rd.number(t, "from", ipath, Bound::positive)) - 1;
        term.to = static_cast<std::size_t>(rd.number(t, "to", ipath, Bound::positive)) - 1;
        term.wave.amplitude = rd.number(t, "amplitude", ipath, Bound::any);
        term.wave.period = rd.number(t, "period", ipath, Bound::positive, 1.0);
        term.wave.phase = rd.number(t, "phase", ipath, Bound::any, 0.0);
        s.terms.push_back(term);
      }
    }
    return s;
  }
  rd.fail(Issue::unknown_kind, join(path, "type"), "none, spontaneous, stimulated or periodic",
          "\"" + *type + "\"");
  return std::monostate{};
}

inline games::BpqState parse_initial(Reader& rd, const json& v, const std::string& path) {
  games::BpqState s;
  const auto N = rd.number_opt(v, "N", path, Bound::positive);
  if (const json* init = rd.child(v, "initial", path, false)) {
    const auto ipath = join(path, "initial");
    if (N) rd.fail(Issue::invariant_breach, join(path, "N"), "either N or initial, not both", "both");
    if (rd.object(*init, ipath)) {
      rd.allow_only(*init, ipath, {"B", "P", "Q"});
      s.B = rd.number(*init, "B", ipath, Bound::nonnegative);
      s.P = rd.number(*init, "P", ipath, Bound::nonnegative, 0.0);
      s.Q = rd.number(*init, "Q", ipath, Bound::nonnegative, 0.0);
    }
  } else if (N) {
    s.B = *N;
  } else {
    rd.fail(Issue::missing_field, join(path, "initial"), "initial {B, P, Q} or N", "nothing");
  }
  return s;
}

inline games::BpqCase parse_game(Reader& rd, const json& v, const std::string& path) {
  games::BpqCase out;
  const double id = rd.number(v, "case", path, Bound::positive);
  out.initial = parse_initial(rd, v, path);
  const auto cpath = join(path, "case");
  auto num = [&](std::string_view key, Bound b) { return rd.number(v, key, path, b); };
  if (id == 1) {
    rd.allow_only(v, path, {"kind", "case", "a", "b", "c", "N", "initial"});
    games::Case1 p;
    if (const json* a = rd.child(v, "a", path)) p.a = parse_schedule(rd, *a, join(path, "a"));
    if (const json* b = rd.child(v, "b", path)) p.b = parse_schedule(rd, *b, join(path, "b"));
    if (const json* c = rd.child(v, "c", path, false)) p.c = parse_schedule(rd, *c, join(path, "c"));
    out.params = p;
  } else if (id == 2) {
    rd.allow_only(v, path, {"kind", "case", "beta", "b", "N", "initial"});
    out.params = games::Case2{num("beta", Bound::positive), num("b", Bound::positive)};
  } else if (id == 3) {
    rd.allow_only(v, path, {"kind", "case", "a", "beta", "b", "N", "initial"});
    out.params = games::Case3{num("a", Bound::nonnegative), num("beta", Bound::nonnegative),
                              num("b", Bound::nonnegative)};
  } else if (id == 4) {
    rd.allow_only(v, path, {"kind", "case", "beta", "gamma", "N", "initial"});
    out.params = games::Case4{num("beta", Bound::positive), num("gamma", Bound::positive)};
  } else if (id == 5) {
    rd.allow_only(v, path, {"kind", "case", "a", "gamma", "N", "initial"});
    out.params = games::Case5{num("a", Bound::positive), num("gamma", Bound::positive)};
  } else if (id == 6) {
    rd.allow_only(v, path, {"kind", "case", "a", "b", "gamma", "N", "initial"});
    out.params = games::Case6{num("a", Bound::positive), num("b", Bound::nonnegative),
                              num("gamma", Bound::nonnegative)};
  } else if (v.contains("case")) {
    rd.fail(Issue::unknown_kind, cpath, "game case 1 to 6", type_of(v["case"]));
  }
  return out;
}

inline ModelSpec parse_model(Reader& rd, const json& v, const std::string& path) {
  if (!rd.object(v, path)) return SimpleSpec{};
  const auto kind = rd.string_opt(v, "kind", path);
  if (!kind) {
    if (!v.contains("kind")) rd.fail(Issue::missing_field, join(path, "kind"), "model kind", "nothing");
    return SimpleSpec{};
  }
  auto num = [&](std::string_view key, Bound b, std::optional<double> def = std::nullopt) {
    return rd.number(v, key, path, b, def);
  };
  ModelSpec out;

  if (*kind == "simple") {
    rd.allow_only(v, path, {"kind", "a", "T50", "u0", "N"});
    SimpleSpec s;
    s.model.u0 = num("u0", Bound::share, 0.0);
    s.model.N = num("N", Bound::positive, 1.0);
    const auto a = rd.number_opt(v, "a", path, Bound::positive);
    s.T50 = rd.number_opt(v, "T50", path, Bound::positive);
    if (a && s.T50) {
      rd.fail(Issue::invariant_breach, join(path, "T50"), "either a or T50, not both", "both");
    } else if (a) {
      s.model.a = *a;
    } else if (s.T50) {
      s.model.a = monopoly::rate_for_t50(*s.T50);
    } else if (!v.contains("a") && !v.contains("T50")) {
      rd.fail(Issue::missing_field, join(path, "a"), "rate a or T50", "nothing");
    }
    out = s;
  } else if (*kind == "scheduled") {
    rd.allow_only(v, path, {"kind", "schedule", "u0", "N"});
    ScheduledSpec s;
    if (const json* sch = rd.child(v, "schedule", path)) s.schedule = parse_schedule(rd, *sch, join(path, "schedule"));
    s.u0 = num("u0", Bound::share, 0.0);
    s.N = num("N", Bound::positive, 1.0);
    out = s;
  } else if (*kind == "segmented") {
    rd.allow_only(v, path, {"kind", "segments", "N"});
    SegmentedSpec s;
    s.N = num("N", Bound::positive, 1.0);
    if (const json* segs = rd.child(v, "segments", path)) {
      const auto spath = join(path, "segments");
      if (!segs->is_array()) rd.fail(Issue::wrong_type, spath, "array of segments", type_of(*segs));
      for (std::size_t i = 0; segs->is_array() && i < segs->size(); ++i) {
        const auto ipath = index(spath, i);
        const auto& seg = (*segs)[i];
        if (!rd.object(seg, ipath)) continue;
        rd.allow_only(seg, ipath, {"n", "schedule"});
        monopoly::Segment one;
        one.n = rd.number(seg, "n", ipath, Bound::share);
        if (const json* sch = rd.child(seg, "schedule", ipath)) one.schedule = parse_schedule(rd, *sch, join(ipath, "schedule"));
        s.segments.push_back(std::move(one));
      }
    }
    out = s;
  } else if (*kind == "hesitation") {
    rd.allow_only(v, path, {"kind", "a", "b", "c", "variant", "N"});
    monopoly::HesitationParams p;
    p.a = num("a", Bound::positive);
    p.b = num("b", Bound::nonnegative);
    p.c = num("c", Bound::positive);
    p.N = num("N", Bound::positive, 1.0);
    const auto variant = rd.string_opt(v, "variant", path).value_or("absorbing");
    if (variant == "absorbing") p.variant = monopoly::HesitationVariant::absorbing_hesitation;
    else if (variant == "returning") p.variant = monopoly::HesitationVariant::returning_hesitation;
    else rd.fail(Issue::unknown_kind, join(path, "variant"), "absorbing or returning", "\"" + variant + "\"");
    out = p;
  } else if (*kind == "birth_death") {
    rd.allow_only(v, path, {"kind", "a", "d", "f", "g", "N"});
    monopoly::BirthDeathParams p;
    p.a = num("a", Bound::positive);
    p.d = num("d", Bound::nonnegative, 0.0);
    p.f = num("f", Bound::nonnegative, 0.0);
    p.g = num("g", Bound::nonnegative, 0.0);
    p.N = num("N", Bound::positive, 1.0);
    out = p;
  } else if (*kind == "feedback") {
    rd.allow_only(v, path, {"kind", "kernel", "a", "T50", "u0", "N"});
    FeedbackSpec s;
    if (const json* k = rd.child(v, "kernel", path)) s.model.kernel = parse_kernel(rd, *k, join(path, "kernel"));
    s.model.u0 = num("u0", Bound::share, 0.0);
    s.model.N = num("N", Bound::positive, 1.0);
    const auto a = rd.number_opt(v, "a", path, Bound::positive);
    s.T50 = rd.number_opt(v, "T50", path, Bound::positive);
    if (a && s.T50) {
      rd.fail(Issue::invariant_breach, join(path, "T50"), "either a or T50, not both", "both");
    } else if (a) {
      s.model.rate = *a;
    } else if (s.T50) {
      if (rd.errors.empty()) {
        rd.guard(join(path, "T50"),
                 [&] { s.model.rate = feedback::calibrate_rate(s.model.kernel, *s.T50, s.model.u0); });
      }
    } else if (!v.contains("a") && !v.contains("T50")) {
      rd.fail(Issue::missing_field, join(path, "a"), "rate a or T50", "nothing");
    }
    out = s;
  } else if (*kind == "competition") {
    rd.allow_only(v, path, {"kind", "m", "r", "u0", "churn"});
    CompetitionSpec s;
    s.market.m = rd.numbers(v, "m", path, Bound::nonnegative);
    const std::size_t n = s.market.m.size();
    s.market.r = rd.numbers(v, "r", path, Bound::nonnegative, n);
    s.market.u0 = rd.numbers(v, "u0", path, Bound::share, n);
    if (const json* c = rd.child(v, "churn", path, false)) s.churn = parse_churn(rd, *c, join(path, "churn"));
    out = s;
  } else if (*kind == "game") {
    out = parse_game(rd, v, path);
  } else if (*kind == "complementary") {
    rd.allow_only(v, path, {"kind", "g", "b", "a_c", "b_c", "tau", "N", "N_c"});
    games::ComplementarySpec s;
    s.g = num("g", Bound::nonnegative);
    s.b = num("b", Bound::nonnegative);
    s.a_c = num("a_c", Bound::positive);
    s.b_c = num("b_c", Bound::positive);
    s.tau = num("tau", Bound::any, 0.0);
    s.N = num("N", Bound::positive, 1.0);
    s.N_c = rd.number_opt(v, "N_c", path, Bound::positive);
    out = s;
  } else {
    rd.fail(Issue::unknown_kind, join(path, "kind"),
            "simple, scheduled, segmented, hesitation, birth_death, feedback, competition, game or complementary",
            "\"" + *kind + "\"");
  }
  return out;
}

inline void validate_model(Reader& rd, const ModelSpec& m, const std::string& path) {
  rd.guard(path, [&] {
    std::visit(
        [](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, SimpleSpec>) s.model.validate();
          else if constexpr (std::is_same_v<T, ScheduledSpec>) {
            s.schedule.validate();
            require(s.u0 >= 0.0 && s.u0 < 1.0, ErrorCode::parameter, "u0 must lie in [0, 1)");
          } else if constexpr (std::is_same_v<T, SegmentedSpec>) monopoly::validate_segments(s.segments);
          else if constexpr (std::is_same_v<T, FeedbackSpec>) s.model.validate();
          else if constexpr (std::is_same_v<T, CompetitionSpec>) {
            s.market.validate();
            competition::validate_churn(s.churn);
            const auto k = competition::churn_size(s.churn);
            require(k == 0 || k == s.market.size(), ErrorCode::parameter,
                    "churn matrix size differs from the number of suppliers");
            if (std::holds_alternative<competition::PeriodicChurnSpec>(s.churn)) {
              require(s.market.size() == 2, ErrorCode::parameter, "periodic churn is modelled for two suppliers");
              require(std::abs(s.market.u0[0] + s.market.u0[1] - 1.0) <= 1e-12, ErrorCode::parameter,
                      "periodic churn acts on a fully developed market: u0 must sum to 1");
            }
          } else if constexpr (std::is_same_v<T, games::BpqCase>) games::validate(s);
          else s.validate();
        },
        m);
  });
}

inline Scenario parse_one(Reader& rd, const json& v, const std::string& path) {
  Scenario s;
  if (!rd.object(v, path)) return s;
  rd.allow_only(v, path, {"name", "model", "horizon", "samples", "outputs", "time_unit"});
  s.name = rd.string_opt(v, "name", path).value_or("");
  s.time_unit = rd.string_opt(v, "time_unit", path).value_or("");
  s.horizon = rd.number(v, "horizon", path, Bound::positive);
  if (const auto n = rd.number_opt(v, "samples", path, Bound::integer_positive)) {
    s.samples = static_cast<std::size_t>(*n);
  }
  if (const json* outs = rd.child(v, "outputs", path, false)) {
    const auto opath = join(path, "outputs");
    if (!outs->is_array()) rd.fail(Issue::wrong_type, opath, "array of channel names", type_of(*outs));
    for (std::size_t i = 0; outs->is_array() && i < outs->size(); ++i) {
      if ((*outs)[i].is_string()) s.outputs.push_back((*outs)[i].get<std::string>());
      else rd.fail(Issue::wrong_type, index(opath, i), "channel name", type_of((*outs)[i]));
    }
  }
  const auto before = rd.errors.size();
  if (const json* m = rd.child(v, "model", path)) {
    const auto mpath = join(path, "model");
    s.model = parse_model(rd, *m, mpath);
    if (rd.errors.size() == before) validate_model(rd, s.model, mpath);
  }
  return s;
}

inline json parse_json(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError({{Issue::wrong_type, "", "a JSON document", e.what()}});
  }
}

}  // namespace detail

/// A single scenario document.
inline Scenario parse_scenario(std::string_view text) {
  detail::Reader rd;
  auto s = detail::parse_one(rd, detail::parse_json(text), "");
  if (!rd.errors.empty()) throw ScenarioError(std::move(rd.errors));
  return s;
}

/// One scenario, a JSON array of scenarios, or {"scenarios": [...]}.
inline std::vector<Scenario> parse_batch(std::string_view text) {
  const json doc = detail::parse_json(text);
  detail::Reader rd;
  std::vector<Scenario> out;
  const json* list = nullptr;
  std::string prefix;
  if (doc.is_array()) {
    list = &doc;
  } else if (doc.is_object() && doc.contains("scenarios")) {
    rd.allow_only(doc, "", {"scenarios"});
    list = &doc["scenarios"];
    prefix = "scenarios";
    if (!list->is_array()) {
      rd.fail(Issue::wrong_type, prefix, "array of scenarios", detail::type_of(*list));
      throw ScenarioError(std::move(rd.errors));
    }
  }
  if (list) {
    for (std::size_t i = 0; i < list->size(); ++i) out.push_back(detail::parse_one(rd, (*list)[i], detail::index(prefix, i)));
  } else {
    out.push_back(detail::parse_one(rd, doc, ""));
  }
  if (!rd.errors.empty()) throw ScenarioError(std::move(rd.errors));
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline json schedule_json(const monopoly::RateSchedule& s) {
  return std::visit(
      [](const auto& k) -> json {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, monopoly::ConstantRate>) return {{"type", "constant"}, {"a", k.a}};
        else if constexpr (std::is_same_v<T, monopoly::LinearRate>)
          return {{"type", "linear"}, {"a0", k.a0}, {"a1", k.a1}};
        else if constexpr (std::is_same_v<T, monopoly::ExpDecayRate>)
          return {{"type", "exp_decay"}, {"a0", k.a0}, {"beta", k.beta}};
        else if constexpr (std::is_same_v<T, monopoly::CutoffRate>)
          return {{"type", "cutoff"}, {"a", k.a}, {"T", k.T}};
        else {
          json pts = json::array();
          for (const auto& [t, r] : k.points) pts.push_back({t, r});
          return {{"type", "tabulated"}, {"points", pts}};
        }
      },
      s.kind());
}

inline json kernel_json(const feedback::FeedbackKernel& k) {
  using feedback::KernelKind;
  const std::string name(feedback::to_string(k.kind));
  switch (k.kind) {
    case KernelKind::bass: return {{"type", name}, {"ratio", k.param}};
    case KernelKind::power: return {{"type", name}, {"n", k.param}};
    case KernelKind::inverse_u_cutoff: return {{"type", name}, {"u1", k.param}};
    default: return name;
  }
}

inline json churn_json(const competition::ChurnSpec& c) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, std::monostate>) return {{"type", "none"}};
        else if constexpr (std::is_same_v<T, competition::ChurnMatrix>)
          return {{"type", "spontaneous"}, {"a", s.rows()}};
        else if constexpr (std::is_same_v<T, competition::StimulatedChurnSpec>)
          return {{"type", "stimulated"}, {"a", s.churn.rows()}, {"b", s.b}, {"eps", s.eps}};
        else {
          json terms = json::array();
          for (const auto& t : s.terms) {
            terms.push_back({{"from", t.from + 1},
                             {"to", t.to + 1},
                             {"amplitude", t.wave.amplitude},
                             {"period", t.wave.period},
                             {"phase", t.wave.phase}});
          }
          return {{"type", "periodic"}, {"a", s.a0.rows()}, {"terms", terms}};
        }
      },
      c);
}

inline json model_json(const ModelSpec& m) {
  json out = std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SimpleSpec>) {
          json j = {{"u0", s.model.u0}, {"N", s.model.N}};
          if (s.T50) j["T50"] = *s.T50;
          else j["a"] = s.model.a;
          return j;
        } else if constexpr (std::is_same_v<T, ScheduledSpec>) {
          return {{"schedule", schedule_json(s.schedule)}, {"u0", s.u0}, {"N", s.N}};
        } else if constexpr (std::is_same_v<T, SegmentedSpec>) {
          json segs = json::array();
          for (const auto& seg : s.segments) segs.push_back({{"n", seg.n}, {"schedule", schedule_json(seg.schedule)}});
          return {{"segments", segs}, {"N", s.N}};
        } else if constexpr (std::is_same_v<T, monopoly::HesitationParams>) {
          const bool absorbing = s.variant == monopoly::HesitationVariant::absorbing_hesitation;
          return {{"a", s.a}, {"b", s.b}, {"c", s.c}, {"variant", absorbing ? "absorbing" : "returning"}, {"N", s.N}};
        } else if constexpr (std::is_same_v<T, monopoly::BirthDeathParams>) {
          return {{"a", s.a}, {"d", s.d}, {"f", s.f}, {"g", s.g}, {"N", s.N}};
        } else if constexpr (std::is_same_v<T, FeedbackSpec>) {
          json j = {{"kernel", kernel_json(s.model.kernel)}, {"u0", s.model.u0}, {"N", s.model.N}};
          if (s.T50) j["T50"] = *s.T50;
          else j["a"] = s.model.rate;
          return j;
        } else if constexpr (std::is_same_v<T, CompetitionSpec>) {
          return {{"m", s.market.m}, {"r", s.market.r}, {"u0", s.market.u0}, {"churn", churn_json(s.churn)}};
        } else if constexpr (std::is_same_v<T, games::BpqCase>) {
          json j = {{"initial", {{"B", s.initial.B}, {"P", s.initial.P}, {"Q", s.initial.Q}}}};
          std::visit(
              [&j](const auto& p) {
                using C = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<C, games::Case1>) {
                  j["case"] = 1;
                  j["a"] = schedule_json(p.a);
                  j["b"] = schedule_json(p.b);
                  j["c"] = schedule_json(p.c);
                } else if constexpr (std::is_same_v<C, games::Case2>) {
                  j["case"] = 2;
                  j["beta"] = p.beta;
                  j["b"] = p.b;
                } else if constexpr (std::is_same_v<C, games::Case3>) {
                  j["case"] = 3;
                  j["a"] = p.a;
                  j["beta"] = p.beta;
                  j["b"] = p.b;
                } else if constexpr (std::is_same_v<C, games::Case4>) {
                  j["case"] = 4;
                  j["beta"] = p.beta;
                  j["gamma"] = p.gamma;
                } else if constexpr (std::is_same_v<C, games::Case5>) {
                  j["case"] = 5;
                  j["a"] = p.a;
                  j["gamma"] = p.gamma;
                } else {
                  j["case"] = 6;
                  j["a"] = p.a;
                  j["b"] = p.b;
                  j["gamma"] = p.gamma;
                }
              },
              s.params);
          return j;
        } else {
          json j = {{"g", s.g}, {"b", s.b}, {"a_c", s.a_c}, {"b_c", s.b_c}, {"tau", s.tau}, {"N", s.N}};
          if (s.N_c) j["N_c"] = *s.N_c;
          return j;
        }
      },
      m);
  out["kind"] = std::string(kind_name(m));
  return out;
}

}  // namespace detail

inline json to_json(const Scenario& s) {
  json j = {{"model", detail::model_json(s.model)}, {"horizon", s.horizon}};
  if (!s.name.empty()) j["name"] = s.name;
  if (s.samples) j["samples"] = *s.samples;
  if (!s.outputs.empty()) j["outputs"] = s.outputs;
  if (!s.time_unit.empty()) j["time_unit"] = s.time_unit;
  return j;
}

inline std::string serialize_scenario(const Scenario& s) { return to_json(s).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Formatting

/// Shortest general form with 9 significant digits; locale independent.
inline std::string format_number(double v) {
  if (v == 0.0) return "0";
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 9);
  return std::string(buf, res.ptr);
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
};

enum class Format { csv, tsv };

inline std::string render(const Table& t, Format f) {
  const char sep = f == Format::csv ? ',' : '\t';
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += sep;
      const bool quote = f == Format::csv && cells[i].find_first_of(",\"\n") != std::string::npos;
      if (!quote) {
        out += cells[i];
        continue;
      }
      out += '"';
      for (char c : cells[i]) {
        if (c == '"') out += '"';
        out += c;
      }
      out += '"';
    }
    out += '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

// "1 year 7 months", "1 month 20 days" with 1 month = 1/12 and 1 day = 1/365.
inline std::string format_duration(double years) {
  require(years >= 0.0 && std::isfinite(years), ErrorCode::domain, "duration must be finite and >= 0");
  int y = static_cast<int>(std::floor(years));
  double rest = years - y;
  int m = static_cast<int>(std::floor(rest * 12.0 + 1e-9));
  int d = static_cast<int>(std::lround((rest - m / 12.0) * 365.0));
  if (d < 0) d = 0;
  if (d >= 30 && m < 11) {
    // Close to a whole month: show the month rather than 30 days.
    if ((m + 1) / 12.0 - rest < 0.5 / 365.0) {
      ++m;
      d = 0;
    }
  }
  auto part = [](int n, const char* unit) {
    return std::to_string(n) + " " + unit + (n == 1 ? "" : "s");
  };
  std::string out;
  if (y) out = part(y, "year");
  if (m) out += (out.empty() ? "" : " ") + part(m, "month");
  if (d) out += (out.empty() ? "" : " ") + part(d, "day");
  return out.empty() ? "0 days" : out;
}

// ---------------------------------------------------------------------------
// Running

struct Metric {
  std::string name;
  double value = 0.0;
};

struct RunReport {
  Trajectory trajectory;
  std::vector<Metric> metrics;
  std::vector<std::string> notes;
};

namespace detail {

inline void grid_peak(RunReport& r, std::string_view channel, const char* t_name, const char* v_name) {
  const auto v = r.trajectory.channel(std::string(channel));
  const auto k = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  r.metrics.push_back({t_name, r.trajectory.times()[k]});
  r.metrics.push_back({v_name, v[k]});
}

inline std::optional<double> scheduled_time_to(const ScheduledSpec& s, double u) {
  if (u <= s.u0) return 0.0;
  const double target = -std::log((1.0 - u) / (1.0 - s.u0));
  if (s.schedule.cumulative_limit() <= target) return std::nullopt;
  double hi = 1.0;
  while (s.schedule.cumulative(hi) < target) hi *= 2.0;
  return numerics::solve_root([&](double t) { return s.schedule.cumulative(t) - target; }, 0.0, hi,
                              1e-13 * hi);
}

inline void add_feedback_metrics(RunReport& r, const feedback::FeedbackModel& m) {
  using feedback::KernelKind;
  r.metrics.push_back({"rate", m.rate});
  if (m.kernel.kind == KernelKind::inverse_u_cutoff) {
    r.metrics.push_back({"cutoff_time", feedback::cutoff_time(m)});
    if (m.kernel.param <= 0.5) {
      r.notes.push_back("the market stops at u1 = " + format_number(m.kernel.param) + " and never reaches 50%");
      return;
    }
  }
  if (m.u0 >= 0.5) return;
  const auto mm = feedback::latency_metrics(m);
  r.metrics.push_back({"T50", mm.T50});
  r.metrics.push_back({"T10", mm.T10});
  r.metrics.push_back({"T10_over_T50", mm.T10 / mm.T50});
  if (mm.T60_minus_T50) r.metrics.push_back({"T60_minus_T50", *mm.T60_minus_T50});
  if (mm.inflection) {
    r.metrics.push_back({"inflection_u", mm.inflection->u});
    r.metrics.push_back({"inflection_t", mm.inflection->t});
    r.metrics.push_back({"inflection_gradient", mm.inflection->gradient});
  }
  if (m.kernel.canonical().kind == KernelKind::quadratic && m.u0 > 0.0 && m.u0 < 0.1) {
    const double printed = feedback::quadratic_time_u_minus_u0_form(m.rate, m.u0, 0.1) /
                           feedback::quadratic_time_u_minus_u0_form(m.rate, m.u0, 0.5);
    r.metrics.push_back({"T10_over_T50_printed_form", printed});
    r.notes.push_back("quadratic kernel: the published closed form gives T10/T50 = " + format_number(printed) +
                      "; the exact integral gives " + format_number(mm.T10 / mm.T50));
  }
}

inline void add_competition_metrics(RunReport& r, const CompetitionSpec& s) {
  using namespace competition;
  const auto& mk = s.market;
  const std::size_t n = mk.size();
  std::vector<double> eq;
  bool grows = false;
  double start = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    grows = grows || mk.m[i] > 0.0 || (mk.r[i] > 0.0 && mk.u0[i] > 0.0);
    start += mk.u0[i];
  }
  const double total = grows ? 1.0 : start;
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          eq = fixed_point_no_churn(mk);
        } else if constexpr (std::is_same_v<T, ChurnMatrix>) {
          eq = spontaneous_equilibrium(c);
          for (double& v : eq) v *= total;
        } else if constexpr (std::is_same_v<T, StimulatedChurnSpec>) {
          std::vector<double> from = mk.u0;
          if (start > 0.0) {
            for (double& v : from) v /= start;
          } else {
            from.clear();
          }
          const auto res = stimulated_fixed_point(c, from);
          eq = res.u;
          for (double& v : eq) v *= total;
          r.notes.push_back(std::string("stimulated churn outcome: ") + std::string(to_string(res.outcome)));
        } else {
          eq = spontaneous_equilibrium(c.a0);
          r.notes.push_back("periodic churn: equilibrium shares are the period-averaged means");
        }
      },
      s.churn);
  for (std::size_t i = 0; i < eq.size(); ++i) r.metrics.push_back({"u" + std::to_string(i + 1) + "_eq", eq[i]});
}

inline Trajectory run_competition(const CompetitionSpec& s, std::span<const double> grid) {
  using namespace competition;
  const auto& mk = s.market;
  const bool innovators = std::all_of(mk.r.begin(), mk.r.end(), [](double v) { return v == 0.0; });
  const bool empty = std::all_of(mk.u0.begin(), mk.u0.end(), [](double v) { return v == 0.0; });
  if (const auto* p = std::get_if<PeriodicChurnSpec>(&s.churn)) {
    return periodic_two_supplier_path(*p, mk.u0[0], grid);
  }
  if (innovators && empty) {
    if (std::holds_alternative<std::monostate>(s.churn)) return innovators_only_path(mk.m, grid);
    if (const auto* c = std::get_if<ChurnMatrix>(&s.churn)) return spontaneous_path(mk.m, *c, grid);
  }
  return competitive_path_numeric(mk, s.churn, grid);
}

}  // namespace detail

inline std::size_t effective_samples(const Scenario& s, std::optional<std::size_t> override_samples = {}) {
  if (override_samples) return *override_samples;
  return s.samples.value_or(kDefaultSamples);
}

inline RunReport run_scenario(const Scenario& s, std::optional<std::size_t> override_samples = {}) {
  const auto samples = effective_samples(s, override_samples);
  require(samples >= 2, ErrorCode::parameter, "samples must be >= 2");
  require(s.horizon > 0.0, ErrorCode::parameter, "horizon must be > 0");
  const auto grid = numerics::uniform_grid(0.0, s.horizon, samples);
  RunReport r;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, SimpleSpec>) {
          r.trajectory = monopoly::simple_path(m.model, grid);
          r.metrics.push_back({"a", m.model.a});
          if (m.model.u0 < 0.5) r.metrics.push_back({"T50", monopoly::simple_time_to(m.model, 0.5)});
          if (m.model.u0 < 0.1) r.metrics.push_back({"T10", monopoly::simple_time_to(m.model, 0.1)});
        } else if constexpr (std::is_same_v<T, ScheduledSpec>) {
          r.trajectory = monopoly::scheduled_path(m.schedule, m.u0, m.N, grid);
          const double lim = m.schedule.cumulative_limit();
          r.metrics.push_back({"u_inf", std::isinf(lim) ? 1.0 : 1.0 - (1.0 - m.u0) * std::exp(-lim)});
          if (const auto t = detail::scheduled_time_to(m, 0.5)) r.metrics.push_back({"T50", *t});
          else r.notes.push_back("the schedule never brings the market to 50%");
          if (const auto t = detail::scheduled_time_to(m, 0.1)) r.metrics.push_back({"T10", *t});
        } else if constexpr (std::is_same_v<T, SegmentedSpec>) {
          r.trajectory = monopoly::segmented_path(m.segments, m.N, grid);
          r.metrics.push_back({"u_end", r.trajectory.channel("u").back()});
        } else if constexpr (std::is_same_v<T, monopoly::HesitationParams>) {
          r.trajectory = monopoly::hesitation_path(m, grid);
          const auto e = monopoly::hesitation_eigen(m);
          r.metrics.push_back({"lambda1", e.lambda1});
          r.metrics.push_back({"lambda2", e.lambda2});
          r.metrics.push_back({"u_end", r.trajectory.channel("u").back()});
        } else if constexpr (std::is_same_v<T, monopoly::BirthDeathParams>) {
          r.trajectory = monopoly::birth_death_path(m, grid);
          detail::grid_peak(r, "u", "t_u_max", "u_max");
        } else if constexpr (std::is_same_v<T, FeedbackSpec>) {
          r.trajectory = feedback::demand_curve(m.model, grid);
          detail::add_feedback_metrics(r, m.model);
        } else if constexpr (std::is_same_v<T, CompetitionSpec>) {
          r.trajectory = detail::run_competition(m, grid);
          detail::add_competition_metrics(r, m);
        } else if constexpr (std::is_same_v<T, games::BpqCase>) {
          auto run = games::bpq_solve(m, grid);
          r.trajectory = std::move(run.trajectory);
          if (run.numeric_fallback) {
            r.notes.push_back("no closed form for this schedule combination; integrated numerically");
          }
          const auto peak = games::bpq_peak(m, grid);
          r.metrics.push_back({"T_m", peak.T_m});
          r.metrics.push_back({"P_Tm", peak.P_m});
          r.metrics.push_back({"C_inf", peak.C_inf});
          if (!peak.interior) r.notes.push_back("players decline from t = 0: no interior peak");
          if (const auto* sir = std::get_if<games::Case2>(&m.params)) {
            const auto rel = games::sir_relations(*sir, m.initial);
            r.metrics.push_back({"B_Tm", rel.B_Tm});
            r.metrics.push_back({"B_inf", rel.B_inf});
          }
        } else {
          r.trajectory = games::complementary_path(m, grid);
          detail::grid_peak(r, "P", "T_m_grid", "P_m_grid");
          r.metrics.push_back({"C_end", r.trajectory.channel("C").back()});
        }
      },
      s.model);
  // Channel selection.
  if (!s.outputs.empty()) {
    std::vector<FieldError> errs;
    for (std::size_t i = 0; i < s.outputs.size(); ++i) {
      if (!r.trajectory.has_channel(s.outputs[i])) {
        std::string have;
        for (const auto& l : r.trajectory.labels()) have += (have.empty() ? "" : ", ") + l;
        errs.push_back({Issue::invariant_breach, "outputs[" + std::to_string(i) + "]", "one of {" + have + "}",
                        "\"" + s.outputs[i] + "\""});
      }
    }
    if (!errs.empty()) throw ScenarioError(std::move(errs));
  }
  return r;
}

/// Time series with header `t,<channels>`.
inline Table trajectory_table(const Scenario& s, const RunReport& r) {
  const auto& traj = r.trajectory;
  const std::vector<std::string> channels = s.outputs.empty() ? traj.labels() : s.outputs;
  Table t;
  t.header.push_back("t");
  std::vector<std::size_t> idx;
  for (const auto& c : channels) {
    t.header.push_back(c);
    idx.push_back(traj.index_of(c));
  }
  for (std::size_t k = 0; k < traj.size(); ++k) {
    std::vector<std::string> row{format_number(traj.times()[k])};
    for (auto i : idx) row.push_back(format_number(traj.states()[k][i]));
    t.add(std::move(row));
  }
  return t;
}

inline Table metrics_table(const RunReport& r) {
  Table t{{"metric", "value"}, {}};
  for (const auto& m : r.metrics) t.add({m.name, format_number(m.value)});
  for (const auto& n : r.notes) t.add({"note", n});
  return t;
}

// ---------------------------------------------------------------------------
// Equilibria

inline Table equilibrium_table(const Scenario& s) {
  Table t;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, FeedbackSpec>) {
          t.header = {"u", "class"};
          for (const auto& e : feedback::classify_equilibria(m.model.kernel)) {
            t.add({format_number(e.u), std::string(feedback::to_string(e.cls))});
          }
        } else if constexpr (std::is_same_v<T, SimpleSpec> || std::is_same_v<T, ScheduledSpec>) {
          t.header = {"u", "class"};
          t.add({"1", "attractor"});
        } else if constexpr (std::is_same_v<T, CompetitionSpec>) {
          RunReport r;
          detail::add_competition_metrics(r, m);
          t.header = {"supplier", "u"};
          for (std::size_t i = 0; i < r.metrics.size(); ++i) t.add({std::to_string(i + 1), format_number(r.metrics[i].value)});
        } else if constexpr (std::is_same_v<T, games::BpqCase>) {
          if (const auto* sir = std::get_if<games::Case2>(&m.params)) {
            const auto rel = games::sir_relations(*sir, m.initial);
            t.header = {"compartment", "value"};
            t.add({"B", format_number(rel.B_inf)});
            t.add({"P", "0"});
            t.add({"Q", format_number(rel.Q_inf)});
            return;
          }
          throw Error(ErrorCode::parameter, "equilibrium analysis covers SIR games only");
        } else {
          throw Error(ErrorCode::parameter,
                      "no equilibrium analysis for model kind " + std::string(kind_name(s.model)));
        }
      },
      s.model);
  return t;
}

// ---------------------------------------------------------------------------
// Reference tables

inline Table latency_u0_table(double T50 = 5.0) {
  Table t{{"u0", "T10_over_T50", "T10", "T50"}, {}};
  for (double u0 : {0.001, 0.005, 0.01, 0.02, 0.04}) {
    const auto kernel = feedback::FeedbackKernel::linear();
    const feedback::FeedbackModel m{kernel, feedback::calibrate_rate(kernel, T50, u0), u0, 1.0};
    const auto mm = feedback::latency_metrics(m);
    t.add({format_number(u0), format_number(mm.T10 / mm.T50), format_number(mm.T10), format_number(mm.T50)});
  }
  return t;
}

inline Table latency_kernels_table(double T50 = 5.0) {
  using feedback::FeedbackKernel;
  struct Row {
    const char* label;
    FeedbackKernel kernel;
    double u0;
  };
  const Row rows[] = {
      {"(1-u)/u", FeedbackKernel::trend_linear_zero(), 0.0},
      {"1/u", FeedbackKernel::inverse_u(), 0.0},
      {"1-u", FeedbackKernel::one_minus_u(), 0.0},
      {"no feedback", FeedbackKernel::none(), 0.0},
      {"sqrt(u)", FeedbackKernel::sqrt(), 0.0},
      {"u", FeedbackKernel::linear(), 0.01},
      {"u^2", FeedbackKernel::quadratic(), 0.01},
  };
  Table t{{"feedback", "u0", "T10_over_T50", "T10", "T10_text", "T60_minus_T50", "T60_minus_T50_text"}, {}};
  std::string footnote;
  for (const auto& row : rows) {
    const feedback::FeedbackModel m{row.kernel, feedback::calibrate_rate(row.kernel, T50, row.u0), row.u0, 1.0};
    const auto mm = feedback::latency_metrics(m);
    const double late = mm.T60_minus_T50.value_or(0.0);
    t.add({row.label, format_number(row.u0), format_number(mm.T10 / mm.T50), format_number(mm.T10),
           format_duration(mm.T10), format_number(late), format_duration(late)});
    if (row.kernel.kind == feedback::KernelKind::quadratic) {
      const double printed = feedback::quadratic_time_u_minus_u0_form(m.rate, row.u0, 0.1) /
                             feedback::quadratic_time_u_minus_u0_form(m.rate, row.u0, 0.5);
      const double T10p = printed * T50;
      t.add({"u^2 (published form)*", format_number(row.u0), format_number(printed), format_number(T10p),
             format_duration(T10p), "", ""});
      footnote = "* published closed form with (u - u0) in place of the exact integral; T10/T50 = " +
                 format_number(printed) + " versus " + format_number(mm.T10 / mm.T50) + " from the exact integral";
    }
  }
  if (!footnote.empty()) t.add({footnote, "", "", "", "", "", ""});
  return t;
}

inline Table reference_table(std::string_view which) {
  if (which == "latency_u0") return latency_u0_table();
  if (which == "latency_kernels") return latency_kernels_table();
  throw ScenarioError({{Issue::unknown_kind, "which", "latency_u0 or latency_kernels", "\"" + std::string(which) + "\""}});
}

// ---------------------------------------------------------------------------
// Calibration

/// Targets: {"kind": "simple", "T50"}, {"kind": "feedback", "kernel", "u0", "T50"},
/// {"kind": "case1", "T_m", "ratio"} or {"kind": "sir", "T_m", "P_Tm", "initial": {B, P}}.
inline Table calibrate(std::string_view text) {
  const json doc = detail::parse_json(text);
  detail::Reader rd;
  Table t{{"parameter", "value"}, {}};
  if (!rd.object(doc, "")) throw ScenarioError(std::move(rd.errors));
  const auto kind = rd.string_opt(doc, "kind", "");
  if (!kind) {
    if (!doc.contains("kind")) rd.fail(Issue::missing_field, "kind", "calibration kind", "nothing");
    throw ScenarioError(std::move(rd.errors));
  }
  auto infeasible = [](bool ok, const std::string& bound) {
    if (!ok) throw Error(ErrorCode::calibration_infeasible, "infeasible target: " + bound);
  };
  auto target = [&](std::string_view key) {
    // Calibration targets are checked for feasibility, not as input errors.
    const auto v = rd.number_opt(doc, key, "", detail::Bound::any);
    if (!v && !doc.contains(std::string(key))) {
      rd.fail(Issue::missing_field, std::string(key), "number", "nothing");
    }
    return v.value_or(0.0);
  };
  if (*kind == "simple") {
    rd.allow_only(doc, "", {"kind", "T50"});
    const double T50 = target("T50");
    if (!rd.errors.empty()) throw ScenarioError(std::move(rd.errors));
    infeasible(T50 > 0.0, "T50 > 0");
    t.add({"a", format_number(monopoly::rate_for_t50(T50))});
  } else if (*kind == "feedback") {
    rd.allow_only(doc, "", {"kind", "kernel", "u0", "T50"});
    feedback::FeedbackKernel k;
    if (const json* kj = rd.child(doc, "kernel", "")) k = detail::parse_kernel(rd, *kj, "kernel");
    const double u0 = rd.number(doc, "u0", "", detail::Bound::share, 0.0);
    const double T50 = target("T50");
    if (!rd.errors.empty()) throw ScenarioError(std::move(rd.errors));
    infeasible(T50 > 0.0, "T50 > 0");
    infeasible(u0 < 0.5, "u0 < 0.5");
    infeasible(!(k.needs_seed() && u0 == 0.0), "u0 > 0 for a kernel that needs a seed");
    infeasible(!(k.kind == feedback::KernelKind::inverse_u_cutoff && k.param <= 0.5), "cutoff share u1 > 0.5");
    t.add({"a", format_number(feedback::calibrate_rate(k, T50, u0))});
  } else if (*kind == "case1") {
    rd.allow_only(doc, "", {"kind", "T_m", "ratio"});
    const double T_m = target("T_m");
    const double ratio = target("ratio");
    if (!rd.errors.empty()) throw ScenarioError(std::move(rd.errors));
    infeasible(T_m > 0.0, "T_m > 0");
    infeasible(ratio > 0.0, "(a + c) / b > 0");
    const double total = games::case1_calibrate_total_rate(T_m, ratio);
    t.add({"a_plus_c", format_number(total)});
    t.add({"b", format_number(total / ratio)});
  } else if (*kind == "sir") {
    rd.allow_only(doc, "", {"kind", "T_m", "P_Tm", "initial"});
    const double T_m = target("T_m");
    const double P_Tm = target("P_Tm");
    games::BpqState s;
    if (const json* init = rd.child(doc, "initial", "")) {
      if (rd.object(*init, "initial")) {
        rd.allow_only(*init, "initial", {"B", "P"});
        s.B = rd.number(*init, "B", "initial", detail::Bound::positive);
        s.P = rd.number(*init, "P", "initial", detail::Bound::positive);
      }
    }
    if (!rd.errors.empty()) throw ScenarioError(std::move(rd.errors));
    infeasible(T_m > 0.0, "T_m > 0");
    infeasible(P_Tm > s.P && P_Tm < s.N(), "P(0) < P_Tm < N");
    const auto c = games::sir_calibrate(T_m, P_Tm, s);
    t.add({"b", format_number(c.b)});
    t.add({"beta", format_number(c.beta)});
    t.add({"b_over_beta", format_number(c.b / c.beta)});
  } else {
    rd.fail(Issue::unknown_kind, "kind", "simple, feedback, case1 or sir", "\"" + *kind + "\"");
    throw ScenarioError(std::move(rd.errors));
  }
  return t;
}

}  // namespace marketdyn::scenario
