#pragma once

#include <iosfwd>

#include "mcc/evalmetrics.hpp"
#include "mcc/model.hpp"

namespace mcc::selftest {

// Independent reference implementations (plain scans, no acceleration);
// these are the oracles the fast paths are checked against.
geom::LabelResult brute_label(std::span<const Vec3> queries,
                              const geom::PointCloud& gt, double tau);
double brute_accuracy(const geom::PointCloud& pred, const geom::PointCloud& gt,
                      double rho);
double brute_chamfer(const geom::PointCloud& a, const geom::PointCloud& b);
nn::AttnMask reference_decoder_mask(int64_t n_enc, int64_t n_q);

// Bitwise query-independence check of decode: slicing, perturbing other
// queries, reordering, and chunked decoding must not change a query's output.
bool decode_independence_trial(const model::MccModel& m, Rng& rng,
                               std::string* why = nullptr);

struct CheckResult {
  int checks = 0;
  std::vector<std::string> failures;
  bool ok() const { return failures.empty(); }
};

// Gradient checks, mask/independence checks, and oracle-equivalence checks;
// prints one line per property.
CheckResult run_selftest(std::ostream& out);

}  // namespace mcc::selftest
