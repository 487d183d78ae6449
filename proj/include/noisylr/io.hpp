#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "noisylr/experiments.hpp"
#include "noisylr/labels.hpp"
#include "noisylr/linalg.hpp"
#include "noisylr/model.hpp"
#include "noisylr/solver.hpp"
#include "noisylr/tuning.hpp"

namespace noisylr {

struct LibsvmData {
  DesignMatrix x;
  std::vector<int> y;  // source labels > 0 map to 1, everything else to 0
};

// Parses "label idx:val idx:val ..." lines with 1-based strictly increasing
// indices. The feature count is the maximum index seen unless dims_override
// is given (LIBSVM files may omit trailing all-zero features).
inline LibsvmData parse_libsvm(std::istream& in, Index dims_override = 0) {
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<int> y;
  Index max_index = 0;
  std::string line;
  long line_no = 0;

  auto fail = [&](const std::string& what) {
    throw std::runtime_error("libsvm parse error at line " + std::to_string(line_no) + ": " + what);
  };

  while (std::getline(in, line)) {
    ++line_no;
    const char* p = line.c_str();
    while (*p == ' ' || *p == '\t') ++p;
    if (*p == '\0' || *p == '#') continue;

    char* end = nullptr;
    const double label = std::strtod(p, &end);
    if (end == p) fail("missing label");
    p = end;
    y.push_back(label > 0.0 ? 1 : 0);
    const int row = static_cast<int>(y.size()) - 1;

    long prev_index = 0;
    while (true) {
      while (*p == ' ' || *p == '\t') ++p;
      if (*p == '\0' || *p == '#') break;
      const long idx = std::strtol(p, &end, 10);
      if (end == p || *end != ':') fail("expected index:value pair");
      if (idx < 1) fail("feature index must be >= 1");
      if (idx <= prev_index) fail("feature indices must be strictly increasing");
      p = end + 1;
      const double val = std::strtod(p, &end);
      if (end == p) fail("missing feature value");
      if (!std::isfinite(val)) fail("non-finite feature value");
      p = end;
      prev_index = idx;
      trip.emplace_back(row, static_cast<int>(idx - 1), val);
      max_index = std::max(max_index, static_cast<Index>(idx));
    }
  }
  if (y.empty()) throw std::runtime_error("libsvm parse error: no rows in input");

  const Index d = dims_override > 0 ? dims_override : max_index;
  if (max_index > d) throw std::runtime_error("libsvm parse error: index exceeds dims override");
  LibsvmData data;
  data.x = DesignMatrix::from_triplets(static_cast<Index>(y.size()), d, trip);
  data.y = std::move(y);
  return data;
}

inline LibsvmData load_libsvm(const std::string& path, Index dims_override = 0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_libsvm(in, dims_override);
}

// Values printed with 17 significant digits so a parse round-trip is exact.
inline void write_libsvm(std::ostream& out, const DesignMatrix& x, const std::vector<int>& y) {
  if (static_cast<Index>(y.size()) != x.rows())
    throw std::invalid_argument("write_libsvm: label size mismatch");
  const DenseMatrix dense = x.to_dense();
  char buf[64];
  for (Index i = 0; i < x.rows(); ++i) {
    out << (y[static_cast<std::size_t>(i)] > 0 ? "+1" : "-1");
    for (Index j = 0; j < x.cols(); ++j) {
      if (dense(i, j) == 0.0) continue;
      std::snprintf(buf, sizeof(buf), " %ld:%.17g", static_cast<long>(j + 1), dense(i, j));
      out << buf;
    }
    out << '\n';
  }
}

struct TrainTestSplit {
  LibsvmData train;
  LibsvmData test;
  std::vector<Index> train_idx;
  std::vector<Index> test_idx;
};

// Seeded uniform split without replacement; index sets are disjoint,
// exhaustive, and sorted so downstream row order is reproducible.
inline TrainTestSplit split_train_test(const LibsvmData& data, Index n_train, std::uint64_t seed) {
  const Index n = data.x.rows();
  if (n_train < 1 || n_train >= n)
    throw std::invalid_argument("split_train_test: need 1 <= n_train < n");
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  auto rng = derived_rng(seed, rng_stream::kSplit);
  std::shuffle(idx.begin(), idx.end(), rng);

  TrainTestSplit split;
  split.train_idx.assign(idx.begin(), idx.begin() + n_train);
  split.test_idx.assign(idx.begin() + n_train, idx.end());
  std::sort(split.train_idx.begin(), split.train_idx.end());
  std::sort(split.test_idx.begin(), split.test_idx.end());

  auto gather = [&](const std::vector<Index>& rows) {
    LibsvmData part;
    part.x = data.x.select_rows(rows);
    part.y.reserve(rows.size());
    for (Index i : rows) part.y.push_back(data.y[static_cast<std::size_t>(i)]);
    return part;
  };
  split.train = gather(split.train_idx);
  split.test = gather(split.test_idx);
  return split;
}

// Counts files: header "m=<int>", then one integer per line.
inline void write_counts(std::ostream& out, const CountVector& s) {
  out << "m=" << s.m << '\n';
  for (int c : s.counts) out << c << '\n';
}

inline CountVector read_counts(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header.rfind("m=", 0) != 0)
    throw std::runtime_error("counts file: missing m= header");
  CountVector s;
  s.m = std::stoi(header.substr(2));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    s.counts.push_back(std::stoi(line));
  }
  s.validate();
  return s;
}

inline nlohmann::json coefficients_to_json(const Coefficients& c, double gamma, double lambda) {
  nlohmann::json j;
  j["values"] = std::vector<double>(c.values.data(), c.values.data() + c.values.size());
  j["support"] = c.support;
  j["meta"] = {{"gamma", gamma}, {"lambda", lambda}};
  return j;
}

inline void write_coefficients_json(const std::string& path, const Coefficients& c, double gamma,
                                    double lambda) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << coefficients_to_json(c, gamma, lambda).dump(2) << '\n';
}

inline Coefficients read_coefficients_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  const auto vals = j.at("values").get<std::vector<double>>();
  Vector v(static_cast<Index>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) v[static_cast<Index>(i)] = vals[i];
  return Coefficients::from_values(std::move(v));
}

inline void write_trace_csv(const std::string& path, const IterationTrace& t) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.precision(17);
  const bool parallel = t.workers > 0;
  out << "iter,primal_res,dual_res,objective,h_step" << (parallel ? ",G" : "") << '\n';
  for (std::size_t k = 0; k < t.primal_res.size(); ++k) {
    out << (k + 1) << ',' << t.primal_res[k] << ',' << t.dual_res[k] << ',' << t.objective[k]
        << ',' << t.h_step[k];
    if (parallel) out << ',' << t.workers;
    out << '\n';
  }
}

inline void write_tuning_csv(const std::string& path, const TuningResult& t) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.precision(17);
  out << "lambda,score,support_size,converged\n";
  for (std::size_t i = 0; i < t.lambda_grid.size(); ++i) {
    out << t.lambda_grid[i] << ',' << t.scores[i] << ',' << t.fits[i].support_size() << ','
        << (t.converged[i] ? 1 : 0) << '\n';
  }
}

inline void write_are_table_csv(const std::string& path, const std::vector<AreTableRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.precision(10);
  out << "m,alpha0,n,theoretical,simulated,se,reps,warning\n";
  for (const auto& r : rows) {
    out << r.m << ',' << r.alpha0 << ',' << r.n << ',' << r.theoretical << ',' << r.simulated
        << ',' << r.se << ',' << r.reps << ',' << (r.warning ? 1 : 0) << '\n';
  }
}

inline void write_bench_csv(const std::string& path, const BenchResult& bench) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.precision(10);
  out << "G,fp,fp_se,fn,fn_se,ae,ae_se,ite,ite_se,time_s,time_se,reps\n";
  for (const auto& row : bench.rows) {
    const auto& r = row.report;
    out << row.workers << ',' << r.fp << ',' << r.fp_se << ',' << r.fn << ',' << r.fn_se << ','
        << r.ae << ',' << r.ae_se << ',' << r.ite << ',' << r.ite_se << ',' << r.wall_time << ','
        << r.time_se << ',' << r.reps << '\n';
  }
}

// Companion plot script for an ARE table CSV (simulated vs theoretical by n).
inline void write_are_gnuplot(const std::string& path, const std::string& csv_name) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "set datafile separator ','\n"
      << "set key outside\n"
      << "set xlabel 'n'\n"
      << "set ylabel 'ARE'\n"
      << "set logscale x\n"
      << "plot '" << csv_name
      << "' using 3:5 every ::1 with points pt 7 title 'simulated', \\\n"
      << "     '" << csv_name << "' using 3:4 every ::1 with lines title 'theoretical'\n";
}

inline void write_manifest(const std::string& path, const nlohmann::json& config) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  nlohmann::json j = config;
  j["library"] = "noisylr";
  j["version"] = "0.1.0";
  out << j.dump(2) << '\n';
}

}  // namespace noisylr
