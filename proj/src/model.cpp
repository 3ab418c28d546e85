#include "dirm/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>
#include <tuple>

#include "dirm/error.hpp"

namespace dirm {

namespace {

std::string where(std::size_t i, std::size_t t) {
  return "individual " + std::to_string(i + 1) + ", day " + std::to_string(t + 1);
}

class Fnv1a {
 public:
  void add(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < size; ++k) {
      hash_ ^= bytes[k];
      hash_ *= 0x100000001b3ULL;
    }
  }
  void add_u64(std::uint64_t v) { add(&v, sizeof v); }
  void add_f64(double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    add_u64(bits);
  }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace

Dataset Dataset::from_records(std::span<const ResponseRecord> responses,
                              std::span<const LapseRecord> lapses,
                              std::span<const GroupRecord> groups) {
  if (responses.empty()) throw ConfigError("dataset has no responses");

  std::vector<ResponseRecord> sorted(responses.begin(), responses.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return std::tie(a.individual, a.day, a.test, a.item) <
           std::tie(b.individual, b.day, b.test, b.item);
  });

  std::map<std::pair<std::size_t, std::size_t>, double> lapse_of;
  for (const auto& l : lapses) {
    if (!(l.lapse_days > 0.0) || !std::isfinite(l.lapse_days)) {
      throw ConfigError("lapse must be positive at " + where(l.individual, l.day));
    }
    if (!lapse_of.emplace(std::pair{l.individual, l.day}, l.lapse_days).second) {
      throw ConfigError("duplicate lapse at " + where(l.individual, l.day));
    }
  }
  std::map<std::size_t, std::size_t> group_of;
  for (const auto& g : groups) {
    if (!group_of.emplace(g.individual, g.group).second) {
      throw ConfigError("duplicate group for individual " + std::to_string(g.individual + 1));
    }
  }

  Dataset d;
  d.day_offset_.assign(1, 0);
  d.test_offset_.assign(1, 0);
  d.item_offset_.assign(1, 0);

  // Walk the sorted records, opening a new individual/day/test/item whenever
  // the corresponding index changes; every level must count up from 0.
  std::size_t cur_i = 0, cur_t = 0, cur_s = 0, cur_l = 0;
  bool first = true;
  for (const auto& r : sorted) {
    if (r.response != 0 && r.response != 1) {
      throw ConfigError("response must be 0 or 1 at " + where(r.individual, r.day));
    }
    if (!std::isfinite(r.difficulty)) {
      throw ConfigError("non-finite difficulty at " + where(r.individual, r.day));
    }
    bool new_individual = first || r.individual != cur_i;
    bool new_day = new_individual || r.day != cur_t;
    bool new_test = new_day || r.test != cur_s;
    if (!first && !new_test && r.item == cur_l) {
      throw ConfigError("duplicate response at " + where(r.individual, r.day));
    }
    if (new_individual) {
      const std::size_t expected = first ? 0 : cur_i + 1;
      if (r.individual != expected) {
        throw ConfigError("individual indices must be contiguous from 1; missing " +
                          std::to_string(expected + 1));
      }
      if (!first) d.day_offset_.push_back(d.lapse_.size());
      cur_i = r.individual;
    }
    if (new_day) {
      const std::size_t expected = new_individual ? 0 : cur_t + 1;
      if (r.day != expected) {
        throw ConfigError("day indices must be contiguous from 1 at " +
                          where(r.individual, expected));
      }
      auto it = lapse_of.find({r.individual, r.day});
      if (it == lapse_of.end()) {
        throw ConfigError("missing lapse at " + where(r.individual, r.day));
      }
      if (!first) d.test_offset_.push_back(d.difficulty_.size());
      d.lapse_.push_back(it->second);
      cur_t = r.day;
    }
    if (new_test) {
      const std::size_t expected = new_day ? 0 : cur_s + 1;
      if (r.test != expected) {
        throw ConfigError("test indices must be contiguous from 1 at " +
                          where(r.individual, r.day));
      }
      if (!first) d.item_offset_.push_back(d.response_.size());
      d.difficulty_.push_back(r.difficulty);
      cur_s = r.test;
    } else if (r.difficulty != d.difficulty_.back()) {
      throw ConfigError("items of one test disagree on difficulty at " +
                        where(r.individual, r.day));
    }
    const std::size_t expected_item = new_test ? 0 : cur_l + 1;
    if (r.item != expected_item) {
      throw ConfigError("item indices must be contiguous from 1 at " +
                        where(r.individual, r.day));
    }
    cur_l = r.item;
    d.response_.push_back(static_cast<std::uint8_t>(r.response));
    d.item_test_.push_back(d.difficulty_.size() - 1);
    first = false;
  }
  d.day_offset_.push_back(d.lapse_.size());
  d.test_offset_.push_back(d.difficulty_.size());
  d.item_offset_.push_back(d.response_.size());

  const std::size_t n = cur_i + 1;
  if (lapse_of.size() != d.lapse_.size()) {
    throw ConfigError("lapse file has entries for days without responses");
  }
  d.group_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto it = group_of.find(i);
    if (it == group_of.end()) {
      throw ConfigError("missing group for individual " + std::to_string(i + 1));
    }
    d.group_[i] = it->second;
  }
  if (group_of.size() != n) {
    throw ConfigError("groups file lists individuals without responses");
  }
  return d;
}

std::size_t Dataset::num_groups() const noexcept {
  std::size_t g = 0;
  for (auto v : group_) g = std::max(g, v + 1);
  return g;
}

std::vector<ResponseRecord> Dataset::response_records() const {
  std::vector<ResponseRecord> out;
  out.reserve(response_.size());
  for (std::size_t i = 0; i < num_individuals(); ++i) {
    const IndexRange dr = days(i);
    for (std::size_t d = dr.begin; d < dr.end; ++d) {
      const IndexRange tr = tests(d);
      for (std::size_t s = tr.begin; s < tr.end; ++s) {
        const IndexRange ir = items(s);
        for (std::size_t l = ir.begin; l < ir.end; ++l) {
          out.push_back({i, d - dr.begin, s - tr.begin, l - ir.begin, response_[l],
                         difficulty_[s]});
        }
      }
    }
  }
  return out;
}

std::vector<LapseRecord> Dataset::lapse_records() const {
  std::vector<LapseRecord> out;
  out.reserve(lapse_.size());
  for (std::size_t i = 0; i < num_individuals(); ++i) {
    const IndexRange dr = days(i);
    for (std::size_t d = dr.begin; d < dr.end; ++d) out.push_back({i, d - dr.begin, lapse_[d]});
  }
  return out;
}

std::vector<GroupRecord> Dataset::group_records() const {
  std::vector<GroupRecord> out;
  for (std::size_t i = 0; i < num_individuals(); ++i) out.push_back({i, group_[i]});
  return out;
}

Dataset Dataset::prefix(std::size_t individual, std::size_t num_days) const {
  const IndexRange dr = days(individual);
  if (num_days == 0 || num_days > dr.size()) {
    throw ArgumentError("prefix length out of range");
  }
  Dataset d;
  d.group_ = {group_[individual]};
  d.day_offset_ = {0, num_days};
  const std::size_t first_test = test_offset_[dr.begin];
  const std::size_t first_item = item_offset_[first_test];
  for (std::size_t t = 0; t < num_days; ++t) {
    const std::size_t day = dr.begin + t;
    d.lapse_.push_back(lapse_[day]);
    d.test_offset_.push_back(test_offset_[day + 1] - first_test);
    const IndexRange tr = tests(day);
    for (std::size_t s = tr.begin; s < tr.end; ++s) {
      d.difficulty_.push_back(difficulty_[s]);
      d.item_offset_.push_back(item_offset_[s + 1] - first_item);
      const IndexRange ir = items(s);
      for (std::size_t l = ir.begin; l < ir.end; ++l) {
        d.response_.push_back(response_[l]);
        d.item_test_.push_back(d.difficulty_.size() - 1);
      }
    }
  }
  return d;
}

std::uint64_t Dataset::checksum() const {
  Fnv1a h;
  h.add_u64(num_individuals());
  for (std::size_t i = 0; i < num_individuals(); ++i) {
    h.add_u64(group_[i]);
    const IndexRange dr = days(i);
    h.add_u64(dr.size());
    for (std::size_t d = dr.begin; d < dr.end; ++d) {
      h.add_f64(lapse_[d]);
      const IndexRange tr = tests(d);
      h.add_u64(tr.size());
      for (std::size_t s = tr.begin; s < tr.end; ++s) {
        h.add_f64(difficulty_[s]);
        const IndexRange ir = items(s);
        h.add_u64(ir.size());
        h.add(response_.data() + ir.begin, ir.size());
      }
    }
  }
  return h.value();
}

bool Priors::objective() const noexcept {
  auto is_objective = [](const PrecisionPrior& p) { return p.shape == -0.5 && p.rate == 0.0; };
  return std::isinf(growth.variance) && is_objective(drift) && is_objective(day_effect) &&
         is_objective(test_effect);
}

void ModelConstants::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be > 0");
  if (!(rho > 0.0) || !std::isfinite(rho)) throw ConfigError("rho must be > 0");
  if (!(delta_tmax > 0.0)) throw ConfigError("delta_tmax must be > 0");
  if (group_prior.empty()) throw ConfigError("at least one group prior is required");
  for (std::size_t j = 0; j < group_prior.size(); ++j) {
    if (!(group_prior[j].variance > 0.0) || !std::isfinite(group_prior[j].variance) ||
        !std::isfinite(group_prior[j].mean)) {
      throw ConfigError("group " + std::to_string(j + 1) + " prior needs finite mean and variance > 0");
    }
  }
  if (!(priors.growth.variance > 0.0)) throw ConfigError("growth prior variance must be > 0");
  for (const PrecisionPrior* p : {&priors.drift, &priors.day_effect, &priors.test_effect}) {
    if (p->rate < 0.0) throw ConfigError("precision prior rate must be >= 0");
  }
}

void ModelConstants::check_groups(const Dataset& data) const {
  if (data.num_groups() > group_prior.size()) {
    throw ConfigError("dataset uses group " + std::to_string(data.num_groups()) +
                      " but only " + std::to_string(group_prior.size()) +
                      " group priors are configured");
  }
}

LatentState LatentState::initial(const Dataset& data) {
  const std::size_t n = data.num_individuals();
  LatentState s;
  s.theta.assign(data.num_days_total() + n, 0.0);
  s.growth.assign(n, 0.0);
  s.drift_precision = 1.0;
  s.day_effect.assign(data.num_days_total(), 0.0);
  s.day_effect_precision.assign(n, 1.0);
  s.test_effect.assign(data.num_tests_total(), 0.0);
  s.test_effect_precision.assign(n, 1.0);
  s.latent_utility.resize(data.num_items_total());
  for (std::size_t l = 0; l < data.num_items_total(); ++l) {
    s.latent_utility[l] = data.response(l) == 1 ? 1.0 : -1.0;
  }
  s.ks_scale.assign(data.num_items_total(), 1.0);
  return s;
}

std::string ValidationReport::first_clause() const {
  return violations.empty() ? std::string{} : violations.front().clause;
}

std::string ValidationReport::to_string() const {
  if (passed()) return "dataset passes the propriety conditions\n";
  std::ostringstream out;
  for (const auto& v : violations) {
    out << "violated: " << v.clause;
    if (v.individual) out << " (individual " << *v.individual + 1 << ")";
    out << '\n';
  }
  return out.str();
}

ValidationReport validate_individual(const Dataset& data, std::size_t i) {
  ValidationReport report;
  const IndexRange dr = data.days(i);
  const std::size_t num_days = dr.size();
  if (num_days < 2) report.violations.push_back({clause::kMinDays, i});

  std::size_t mixed_days = 0;
  std::size_t total_tests = 0;
  for (std::size_t d = dr.begin; d < dr.end; ++d) {
    const IndexRange tr = data.tests(d);
    total_tests += tr.size();
    if (tr.size() < 2) continue;
    std::size_t mixed_tests = 0;
    for (std::size_t s = tr.begin; s < tr.end; ++s) {
      const IndexRange ir = data.items(s);
      bool has0 = false;
      bool has1 = false;
      for (std::size_t l = ir.begin; l < ir.end; ++l) {
        (data.response(l) == 1 ? has1 : has0) = true;
      }
      if (has0 && has1) ++mixed_tests;
    }
    if (mixed_tests >= 2) ++mixed_days;
  }
  if (mixed_days < 2) report.violations.push_back({clause::kMixedTests, i});

  const double tau_shape = (static_cast<double>(total_tests) - (num_days + 1.0)) / 2.0;
  if (!(tau_shape > 0.0)) report.violations.push_back({clause::kTestPrecisionShape, i});
  const double delta_shape = (static_cast<double>(num_days) - 1.0) / 2.0;
  if (!(delta_shape > 0.0)) report.violations.push_back({clause::kDayPrecisionShape, i});
  return report;
}

ValidationReport validate_dataset(const Dataset& data) {
  ValidationReport report;
  if (data.num_individuals() < 2) report.violations.push_back({clause::kMinIndividuals, {}});
  for (std::size_t i = 0; i < data.num_individuals(); ++i) {
    auto r = validate_individual(data, i);
    report.violations.insert(report.violations.end(), r.violations.begin(), r.violations.end());
  }
  const double phi_shape = (static_cast<double>(data.num_days_total()) - 1.0) / 2.0;
  if (!(phi_shape > 0.0)) report.violations.push_back({clause::kDriftPrecisionShape, {}});
  return report;
}

}  // namespace dirm
