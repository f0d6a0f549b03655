#pragma once

#include <string>
#include <utility>
#include <vector>

#include "qtree/char_fn.hpp"
#include "qtree/eigen_search.hpp"

namespace qtree {

/// Delta(lambda) = Delta0(lambda) * prod_n (lambda_n - lambda) / (lambda0_n - lambda).
struct TruncatedProduct {
  CharFn reference;
  std::vector<std::pair<double, double>> pairs;  // (lambda_n, lambda0_n), index-ordered
  int truncation = 0;
  double tail_shift = 0.0;  // mean shift applied beyond the truncation, 0 when disabled
  std::vector<double> tail_reference;  // reference zeros beyond the truncation
  double tail_remainder = 0.0;  // estimated sum of 1 / lambda0_n past tail_reference
};

struct ReconstructionOptions {
  int min_truncation = 8;        // below this the data is rejected as insufficient
  bool tail_correction = false;  // extend the product with lambda0_n + mean shift
  int tail_terms = 0;            // reference zeros used for the tail, 0 = 2 * N
};

struct TruncationDiagnostics {
  int truncation = 0;
  double mean_shift = 0.0;   // mean of lambda_n - lambda0_n over the upper half of the pairs
  double shift_spread = 0.0;  // max deviation from the mean over the upper half
  double tail_estimate = 0.0;  // |mean shift| * sum_{n > N} 1 / lambda0_n, estimated
  std::string message;
};

// Reference zeros are computed on the spectrum's window.
TruncatedProduct pair_spectra(const SpectrumSet& spectrum, const CharFn& zero_reference, int truncation,
                              const ReconstructionOptions& opts = {});

TruncationDiagnostics diagnose(const TruncatedProduct& product);

// Throws at a zero of the reference (a pole of one factor).
cplx evaluate_product(const TruncatedProduct& product, cplx lambda);

CharFn reconstruct_char_fn(const SpectrumSet& spectrum, const CharFn& zero_reference, int truncation,
                           const ReconstructionOptions& opts = {});

CharFn product_char_fn(const TruncatedProduct& product, const std::string& tag);

}  // namespace qtree
