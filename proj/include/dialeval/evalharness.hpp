#pragma once

// Rank-correlation evaluation of metric scores against human ratings, plus
// the human-rating analysis: pairwise dimension correlation matrix, grouping
// by a correlation threshold, and the three-rule representative-dimension
// selection.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "dialeval/corpus.hpp"

namespace dialeval {

// ---------------------------------------------------------------------------
// Spearman correlation

// 1-based average ranks; tied values receive the mean of their rank span.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });

  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

namespace detail {

inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  const std::size_t n = xs.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    cov += dx * dy;
    vx += dx * dx;
    vy += dy * dy;
  }
  if (vx == 0.0 || vy == 0.0)
    throw Error("correlation undefined: an input is constant");
  double r = cov / std::sqrt(vx * vy);
  return std::clamp(r, -1.0, 1.0);
}

inline bool all_equal(std::span<const double> xs) {
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (xs[i] != xs[0]) return false;
  return true;
}

}  // namespace detail

// Pearson correlation of average-ranked values. Undefined (error) for
// mismatched lengths, n < 2, or an all-constant side.
inline double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error("spearman: input lengths differ");
  if (xs.size() < 2) throw Error("spearman: need at least 2 observations");
  if (detail::all_equal(xs) || detail::all_equal(ys))
    throw Error("spearman: correlation undefined for constant input");
  const std::vector<double> rx = average_ranks(xs);
  const std::vector<double> ry = average_ranks(ys);
  return detail::pearson(rx, ry);
}

// ---------------------------------------------------------------------------
// Significance

// Two-sided p-value from the t-statistic rho*sqrt((n-2)/(1-rho^2)) against a
// Student-t law with n-2 degrees of freedom. |rho| = 1 gives p = 0 by
// convention. Accurate for the benchmark sizes used here; a permutation test
// is available below for small n.
inline double p_value(double rho, std::size_t n) {
  if (n < 4) throw Error("p_value: need n >= 4");
  if (std::abs(rho) >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t = rho * std::sqrt(df / (1.0 - rho * rho));
  const boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

// Exact two-sided permutation test over all n! pairings; n is capped at 10.
inline double exact_permutation_p_value(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error("permutation test: input lengths differ");
  if (xs.size() > 10) throw Error("exact permutation test: n must be <= 10");
  const double observed = std::abs(spearman(xs, ys));

  const std::vector<double> rx = average_ranks(xs);
  const std::vector<double> ry = average_ranks(ys);
  std::vector<std::size_t> perm(xs.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});

  std::vector<double> permuted(ys.size());
  std::size_t hits = 0, total = 0;
  do {
    for (std::size_t i = 0; i < perm.size(); ++i) permuted[i] = ry[perm[i]];
    if (std::abs(detail::pearson(rx, permuted)) >= observed - 1e-12) ++hits;
    ++total;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(hits) / static_cast<double>(total);
}

// Monte-Carlo two-sided permutation test with add-one smoothing.
inline double sampled_permutation_p_value(std::span<const double> xs, std::span<const double> ys,
                                          std::size_t n_resamples, std::uint64_t seed) {
  if (xs.size() != ys.size()) throw Error("permutation test: input lengths differ");
  if (n_resamples == 0) throw Error("permutation test: need at least 1 resample");
  const double observed = std::abs(spearman(xs, ys));

  const std::vector<double> rx = average_ranks(xs);
  std::vector<double> ry = average_ranks(ys);
  Rng rng(seed);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < n_resamples; ++r) {
    rng.shuffle(ry);
    if (std::abs(detail::pearson(rx, ry)) >= observed - 1e-12) ++hits;
  }
  return static_cast<double>(hits + 1) / static_cast<double>(n_resamples + 1);
}

// ---------------------------------------------------------------------------
// Metric evaluation

struct ReportEntry {
  std::string metric;     // score-column name; empty when evaluating a single metric
  std::string dimension;
  double rho = 0.0;
  std::optional<double> p_value;  // absent when n < 4
  std::size_t n = 0;
};

inline bool insignificant(const ReportEntry& e) { return !e.p_value || *e.p_value > 0.05; }

// Correlates metric scores with the mean human ratings for one dimension.
// Every benchmark item must have a score; items lacking a rating for the
// dimension are dropped from n.
inline ReportEntry evaluate_metric(const std::map<std::string, double>& scores,
                                   const Benchmark& bench, const std::string& dimension,
                                   const std::string& metric_name = "") {
  std::vector<std::string> missing;
  for (const RatedDialogue& item : bench.items)
    if (!scores.count(item.dialogue.id)) missing.push_back(item.dialogue.id);
  if (!missing.empty())
    throw Error("evaluate_metric: missing scores for ids: " + join(missing, ", "));

  std::vector<double> xs, ys;
  for (const RatedDialogue& item : bench.items) {
    auto it = item.ratings.find(dimension);
    if (it == item.ratings.end()) continue;
    xs.push_back(scores.at(item.dialogue.id));
    ys.push_back(it->second);
  }
  if (xs.size() < 2)
    throw Error("evaluate_metric: fewer than 2 items rate dimension '" + dimension + "'");

  ReportEntry entry;
  entry.metric = metric_name;
  entry.dimension = dimension;
  entry.rho = spearman(xs, ys);
  entry.n = xs.size();
  if (entry.n >= 4) entry.p_value = p_value(entry.rho, entry.n);
  return entry;
}

// ---------------------------------------------------------------------------
// Dimension correlation matrix

struct CorrelationMatrix {
  std::vector<std::string> dimensions;
  std::vector<double> values;  // n x n row-major; NaN marks undefined pairs

  double at(std::size_t i, std::size_t j) const { return values[i * dimensions.size() + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * dimensions.size() + j]; }

  std::size_t index_of(const std::string& dim) const {
    for (std::size_t i = 0; i < dimensions.size(); ++i)
      if (dimensions[i] == dim) return i;
    throw Error("dimension '" + dim + "' is not in the matrix");
  }
};

// Pairwise Spearman over the benchmark's rating columns. Symmetric with unit
// diagonal; pairs involving a constant column are NaN.
inline CorrelationMatrix dimension_correlation_matrix(const Benchmark& bench) {
  if (bench.dimensions.size() < 2)
    throw Error("dimension_correlation_matrix: need at least 2 dimensions");
  CorrelationMatrix m;
  m.dimensions = bench.dimensions;
  const std::size_t n = m.dimensions.size();
  m.values.assign(n * n, std::numeric_limits<double>::quiet_NaN());

  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      std::vector<double> xs, ys;
      for (const RatedDialogue& item : bench.items) {
        auto a = item.ratings.find(m.dimensions[i]);
        auto b = item.ratings.find(m.dimensions[j]);
        if (a == item.ratings.end() || b == item.ratings.end()) continue;
        xs.push_back(a->second);
        ys.push_back(b->second);
      }
      double rho = std::numeric_limits<double>::quiet_NaN();
      if (xs.size() >= 2) {
        try {
          rho = spearman(xs, ys);
        } catch (const Error&) {
          // constant column: leave the pair undefined
        }
      }
      m.at(i, j) = rho;
      m.at(j, i) = rho;
    }
  return m;
}

// ---------------------------------------------------------------------------
// Dimension grouping

struct DimensionGroups {
  std::vector<std::vector<std::string>> groups;  // cover of all dimensions
  double threshold = 0.75;
  std::map<std::string, std::string> representatives;  // filled by select_dimensions
};

namespace detail {

// Connected components over an adjacency list restricted to `alive` vertices.
inline std::vector<std::vector<std::size_t>> components_of(
    const std::vector<std::set<std::size_t>>& adj, const std::set<std::size_t>& alive) {
  std::vector<std::vector<std::size_t>> comps;
  std::set<std::size_t> todo = alive;
  while (!todo.empty()) {
    std::vector<std::size_t> comp;
    std::vector<std::size_t> stack = {*todo.begin()};
    todo.erase(todo.begin());
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      comp.push_back(v);
      for (std::size_t w : adj[v])
        if (todo.erase(w)) stack.push_back(w);
    }
    std::sort(comp.begin(), comp.end());
    comps.push_back(std::move(comp));
  }
  return comps;
}

}  // namespace detail

// Builds a graph with an edge wherever the correlation reaches the threshold;
// groups are its connected components, except that a dimension bridging
// otherwise-separate clusters is listed in every cluster it touches.
// "Bridging" means an articulation vertex whose removal splits its component
// into at least two parts of two or more dimensions each (a lone dimension is
// not a cluster); such vertices are removed before taking components and then
// added to every resulting group they have an edge to.
inline DimensionGroups group_dimensions(const CorrelationMatrix& matrix,
                                        double threshold = 0.75) {
  const std::size_t n = matrix.dimensions.size();
  std::vector<std::set<std::size_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && !std::isnan(matrix.at(i, j)) && matrix.at(i, j) >= threshold) adj[i].insert(j);

  std::set<std::size_t> all;
  for (std::size_t i = 0; i < n; ++i) all.insert(i);

  std::vector<std::vector<std::size_t>> index_groups;
  for (const std::vector<std::size_t>& comp : detail::components_of(adj, all)) {
    if (comp.size() <= 2) {
      index_groups.push_back(comp);
      continue;
    }
    const std::set<std::size_t> comp_set(comp.begin(), comp.end());

    std::set<std::size_t> bridges;
    for (std::size_t v : comp) {
      std::set<std::size_t> rest = comp_set;
      rest.erase(v);
      const auto parts = detail::components_of(adj, rest);
      if (parts.size() < 2) continue;
      const bool all_clusters = std::all_of(parts.begin(), parts.end(),
                                            [](const auto& p) { return p.size() >= 2; });
      if (all_clusters) bridges.insert(v);
    }
    if (bridges.empty()) {
      index_groups.push_back(comp);
      continue;
    }

    std::set<std::size_t> rest = comp_set;
    for (std::size_t v : bridges) rest.erase(v);
    std::set<std::size_t> placed;
    for (std::vector<std::size_t> part : detail::components_of(adj, rest)) {
      for (std::size_t v : bridges) {
        const bool touches = std::any_of(part.begin(), part.end(),
                                         [&](std::size_t w) { return adj[v].count(w) > 0; });
        if (touches) {
          part.push_back(v);
          placed.insert(v);
        }
      }
      std::sort(part.begin(), part.end());
      index_groups.push_back(std::move(part));
    }
    // A bridge surrounded only by other bridges still needs a group.
    for (std::size_t v : bridges)
      if (!placed.count(v)) index_groups.push_back({v});
  }

  std::sort(index_groups.begin(), index_groups.end());
  DimensionGroups out;
  out.threshold = threshold;
  for (const std::vector<std::size_t>& g : index_groups) {
    std::vector<std::string> names;
    names.reserve(g.size());
    for (std::size_t i : g) names.push_back(matrix.dimensions[i]);
    out.groups.push_back(std::move(names));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dimension selection

// From each group, the representative must (a) correlate with the overall
// dimension above `overall_corr_min`, (b) have inter-annotator agreement of at
// least `agreement_min`, (c) be marked N/A at most `na_threshold` of the time,
// and (d) not be shared between groups. Groups with no qualifying member
// contribute nothing. Among qualifying members the one with the highest
// overall correlation wins.
inline std::vector<std::string> select_dimensions(
    DimensionGroups& groups, const Benchmark& bench, const std::string& overall_dim,
    const std::map<std::string, double>& agreement, double na_threshold = 0.2,
    double overall_corr_min = 0.75, double agreement_min = 0.6) {
  std::map<std::string, int> group_count;
  for (const auto& g : groups.groups)
    for (const std::string& dim : g) ++group_count[dim];

  auto corr_with_overall = [&](const std::string& dim) -> std::optional<double> {
    std::vector<double> xs, ys;
    for (const RatedDialogue& item : bench.items) {
      auto a = item.ratings.find(dim);
      auto b = item.ratings.find(overall_dim);
      if (a == item.ratings.end() || b == item.ratings.end()) continue;
      xs.push_back(a->second);
      ys.push_back(b->second);
    }
    if (xs.size() < 2) return std::nullopt;
    try {
      return spearman(xs, ys);
    } catch (const Error&) {
      return std::nullopt;
    }
  };

  auto na_fraction = [&](const std::string& dim) {
    double sum = 0.0;
    for (const RatedDialogue& item : bench.items) {
      auto it = item.na_flags.find(dim);
      if (it != item.na_flags.end()) sum += it->second;
    }
    return bench.items.empty() ? 0.0 : sum / static_cast<double>(bench.items.size());
  };

  std::vector<std::string> selected;
  groups.representatives.clear();
  for (const auto& g : groups.groups) {
    std::string best_dim;
    double best_corr = -2.0;
    for (const std::string& dim : g) {
      if (dim == overall_dim) continue;
      if (group_count[dim] > 1) continue;  // shared between groups
      const auto corr = corr_with_overall(dim);
      if (!corr || *corr <= overall_corr_min) continue;
      auto agr = agreement.find(dim);
      if (agr == agreement.end() || agr->second < agreement_min) continue;
      if (na_fraction(dim) > na_threshold) continue;
      if (*corr > best_corr) {
        best_corr = *corr;
        best_dim = dim;
      }
    }
    if (!best_dim.empty()) {
      selected.push_back(best_dim);
      groups.representatives[join(g, "+")] = best_dim;
    }
  }
  return selected;
}

// ---------------------------------------------------------------------------
// Report rendering

enum class ReportFormat { csv, text };

// Entries are grouped by metric in order of first appearance; each block ends
// with an average-rho row. Insignificant entries (p > 0.05, mirroring the
// benchmark convention) carry a marker.
inline std::string render_report(const std::vector<ReportEntry>& entries, ReportFormat format) {
  std::vector<std::string> metric_order;
  std::map<std::string, std::vector<const ReportEntry*>> by_metric;
  for (const ReportEntry& e : entries) {
    if (!by_metric.count(e.metric)) metric_order.push_back(e.metric);
    by_metric[e.metric].push_back(&e);
  }

  std::ostringstream out;
  if (format == ReportFormat::csv) {
    out << "metric,dimension,rho,p_value,n,insignificant\n";
    for (const std::string& metric : metric_order) {
      double rho_sum = 0.0;
      for (const ReportEntry* e : by_metric[metric]) {
        out << csv_escape(e->metric) << ',' << csv_escape(e->dimension) << ','
            << format_double(e->rho) << ',' << (e->p_value ? format_double(*e->p_value) : "")
            << ',' << e->n << ',' << (insignificant(*e) ? '1' : '0') << '\n';
        rho_sum += e->rho;
      }
      out << csv_escape(metric) << ",average,"
          << format_double(rho_sum / static_cast<double>(by_metric[metric].size())) << ",,,\n";
    }
    return out.str();
  }

  for (const std::string& metric : metric_order) {
    if (!metric.empty()) out << "== " << metric << " ==\n";
    out << std::left << std::setw(20) << "dimension" << std::right << std::setw(10) << "rho"
        << std::setw(12) << "p_value" << std::setw(8) << "n"
        << "\n";
    double rho_sum = 0.0;
    for (const ReportEntry* e : by_metric[metric]) {
      std::ostringstream p;
      if (e->p_value) p << std::fixed << std::setprecision(4) << *e->p_value;
      else p << "n/a";
      out << std::left << std::setw(20) << e->dimension << std::right << std::fixed
          << std::setprecision(4) << std::setw(10) << e->rho << std::setw(12) << p.str()
          << std::setw(8) << e->n << (insignificant(*e) ? "  *" : "") << "\n";
      rho_sum += e->rho;
    }
    out << std::left << std::setw(20) << "average" << std::right << std::fixed
        << std::setprecision(4) << std::setw(10)
        << rho_sum / static_cast<double>(by_metric[metric].size()) << "\n";
  }
  out << "(* = statistically insignificant, p > 0.05)\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Score CSV input (dialogue_id followed by one column per score name)

struct ScoreCsv {
  std::vector<std::string> columns;
  std::vector<std::pair<std::string, std::vector<double>>> rows;

  std::map<std::string, double> column_as_map(const std::string& name) const {
    std::size_t idx = columns.size();
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) idx = i;
    if (idx == columns.size()) throw Error("score column '" + name + "' not found");
    std::map<std::string, double> out;
    for (const auto& [id, values] : rows) out[id] = values[idx];
    return out;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

}  // namespace detail

inline ScoreCsv read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scores file: " + path.string());
  ScoreCsv csv;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || line[0] == '#') continue;
    std::vector<std::string> fields = detail::split_csv_line(line);
    if (!have_header) {
      if (fields.size() < 2 || fields[0] != "dialogue_id")
        throw Error("scores csv: header must start with 'dialogue_id'");
      csv.columns.assign(fields.begin() + 1, fields.end());
      have_header = true;
      continue;
    }
    if (fields.size() != csv.columns.size() + 1)
      throw Error("scores csv line " + std::to_string(line_no) + ": wrong field count");
    std::vector<double> values;
    values.reserve(csv.columns.size());
    for (std::size_t i = 1; i < fields.size(); ++i) {
      try {
        values.push_back(std::stod(fields[i]));
      } catch (const std::exception&) {
        throw Error("scores csv line " + std::to_string(line_no) + ": bad number '" + fields[i] +
                    "'");
      }
    }
    csv.rows.push_back({fields[0], std::move(values)});
  }
  if (!have_header) throw Error("scores csv: empty file " + path.string());
  return csv;
}

}  // namespace dialeval
