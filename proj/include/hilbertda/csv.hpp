#pragma once

#include <cstdio>
#include <fstream>
#include <string>

#include "hilbertda/core.hpp"
#include "hilbertda/ensemble_stats.hpp"
#include "hilbertda/gaussian.hpp"
#include "hilbertda/rect_field.hpp"

namespace hilbertda::csv {

/** Shortest round-trippable decimal form of a double. */
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  out << content;
  if (!out) throw Error("write failed: " + path);
}

/** Grid values as rows "i,j,value" with 1-based indices. */
inline std::string grid_field(const rect_field::GridField& f) {
  std::string out = "i,j,value\n";
  for (Eigen::Index i = 0; i < f.values.rows(); ++i)
    for (Eigen::Index j = 0; j < f.values.cols(); ++j)
      out += std::to_string(i + 1) + "," + std::to_string(j + 1) + "," +
             fmt(f.values(i, j)) + "\n";
  return out;
}

/** One draw per row, seed recorded in a leading metadata line. */
inline std::string sample_batch(const gaussian::SampleBatch& batch) {
  std::string out = "# seed=" + std::to_string(batch.seed) + "\n";
  for (Eigen::Index j = 0; j < batch.count(); ++j) {
    for (Eigen::Index i = 0; i < batch.draws.rows(); ++i) {
      if (i) out += ",";
      out += fmt(batch.draws(i, j));
    }
    out += "\n";
  }
  return out;
}

/** One member per row. */
inline std::string ensemble(const stats::Ensemble& e) {
  std::string out;
  for (Eigen::Index j = 0; j < e.count(); ++j) {
    for (Eigen::Index i = 0; i < e.dim(); ++i) {
      if (i) out += ",";
      out += fmt(e.members(i, j));
    }
    out += "\n";
  }
  return out;
}

/** Columns size,error,bound plus one trailing metadata row carrying the
 *  fitted slope and the empirical constant. */
inline std::string convergence_report(const stats::ConvergenceReport& r) {
  std::string out = "size,error,bound\n";
  for (std::size_t i = 0; i < r.sizes.size(); ++i)
    out += std::to_string(r.sizes[i]) + "," + fmt(r.errors[i]) + "," +
           fmt(r.bounds[i]) + "\n";
  out += "slope," + fmt(r.slope) + ",empirical_constant," + fmt(r.empirical_constant) +
         "\n";
  return out;
}

/** Partial sums of an eigenvalue series: columns count,sum. */
inline std::string partial_sums(const rect_field::PartialSumReport& r) {
  std::string out = "count,sum\n";
  for (std::size_t i = 0; i < r.counts.size(); ++i)
    out += std::to_string(r.counts[i]) + "," + fmt(r.sums[i]) + "\n";
  return out;
}

}  // namespace hilbertda::csv
