#include "qtree/spectral_data.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "qtree/errors.hpp"

namespace qtree {

namespace {

std::string window_text(double a, double b) {
  std::ostringstream os;
  os.precision(10);
  os << "[" << a << ", " << b << "]";
  return os.str();
}

}  // namespace

TruncatedProduct pair_spectra(const SpectrumSet& spectrum, const CharFn& zero_reference, int truncation,
                              const ReconstructionOptions& opts) {
  if (truncation < opts.min_truncation)
    throw ValidationError("insufficient spectral data for " + spectrum.problem + ": truncation N = " +
                          std::to_string(truncation) + " is below the minimum " +
                          std::to_string(opts.min_truncation));
  const auto values = spectrum.expanded();
  if (static_cast<int>(values.size()) < truncation)
    throw ValidationError("pairing failure for " + spectrum.problem + " on window " +
                          window_text(spectrum.window_min, spectrum.window_max) + ": " +
                          std::to_string(values.size()) + " eigenvalues, N = " + std::to_string(truncation));
  SearchOptions so;
  so.check_density = false;
  const SpectrumSet ref =
      find_eigenvalues(zero_reference, spectrum.window_min, spectrum.window_max, -1, so);
  const auto ref_values = ref.expanded();
  if (static_cast<int>(ref_values.size()) < truncation ||
      std::abs(static_cast<int>(ref_values.size()) - static_cast<int>(values.size())) > so.density_slack)
    throw ValidationError("pairing failure for " + spectrum.problem + " on window " +
                          window_text(spectrum.window_min, spectrum.window_max) + ": " +
                          std::to_string(values.size()) + " eigenvalues against " +
                          std::to_string(ref_values.size()) + " reference zeros, N = " +
                          std::to_string(truncation));
  TruncatedProduct p;
  p.reference = zero_reference;
  p.truncation = truncation;
  for (int n = 0; n < truncation; ++n) p.pairs.push_back({values[n], ref_values[n]});

  if (opts.tail_correction) {
    const auto d = diagnose(p);
    p.tail_shift = d.mean_shift;
    const int terms = opts.tail_terms > 0 ? opts.tail_terms : 2 * truncation;
    std::vector<double> tail(ref_values.begin() + truncation, ref_values.end());
    // Extend past the window in chunks; one huge contour loses the winding count.
    const double length = zero_reference.spec() ? zero_reference.spec()->tree.total_length() : 1.0;
    double lo = spectrum.window_max;
    for (int k = 0; k < 400 && static_cast<int>(tail.size()) < terms; ++k) {
      const double rho = std::sqrt(std::max(lo, 1.0));
      const double hi = std::pow(rho + 8.0 * 3.14159265358979323846 / length, 2);
      for (double z : find_eigenvalues(zero_reference, lo, hi, -1, so).expanded())
        if (z > lo) tail.push_back(z);
      lo = hi;
    }
    if (static_cast<int>(tail.size()) >= terms) p.tail_reference.assign(tail.begin(), tail.begin() + terms);
    if (p.tail_reference.empty())
      throw NumericalError("could not collect reference zeros for the tail of " + spectrum.problem);
    // Zeros beyond the explicit tail have density length / pi in rho.
    p.tail_remainder = length / (3.14159265358979323846 * std::sqrt(p.tail_reference.back()));
  }
  return p;
}

TruncationDiagnostics diagnose(const TruncatedProduct& p) {
  TruncationDiagnostics d;
  d.truncation = p.truncation;
  const std::size_t n = p.pairs.size();
  const std::size_t from = n / 2;
  double sum = 0.0;
  for (std::size_t i = from; i < n; ++i) sum += p.pairs[i].first - p.pairs[i].second;
  d.mean_shift = n > from ? sum / static_cast<double>(n - from) : 0.0;
  for (std::size_t i = from; i < n; ++i)
    d.shift_spread = std::max(d.shift_spread, std::abs(p.pairs[i].first - p.pairs[i].second - d.mean_shift));
  // sum_{k > N} 1/lambda0_k with lambda0_k ~ lambda0_N (k/N)^2 is about lambda0_N^{-1} N.
  if (n > 0 && p.pairs.back().second > 0.0)
    d.tail_estimate = std::abs(d.mean_shift) * static_cast<double>(n) / p.pairs.back().second;
  std::ostringstream os;
  os << "N=" << n << " mean_shift=" << d.mean_shift << " spread=" << d.shift_spread
     << " tail_estimate=" << d.tail_estimate;
  d.message = os.str();
  return d;
}

cplx evaluate_product(const TruncatedProduct& p, cplx lambda) {
  cplx value = p.reference(lambda);
  for (const auto& [ln, l0] : p.pairs) {
    const cplx den = l0 - lambda;
    if (std::abs(den) <= 1e-14 * std::max(1.0, std::abs(lambda)))
      throw NumericalError("evaluation at a zero of the reference characteristic function", lambda);
    value *= (ln - lambda) / den;
  }
  for (double l0 : p.tail_reference) value *= (l0 + p.tail_shift - lambda) / (l0 - lambda);
  if (p.tail_remainder > 0.0) value *= std::exp(p.tail_shift * p.tail_remainder);
  return value;
}

CharFn product_char_fn(const TruncatedProduct& product, const std::string& tag) {
  auto shared = std::make_shared<const TruncatedProduct>(product);
  return CharFn([shared](cplx lambda) { return evaluate_product(*shared, lambda); }, tag);
}

CharFn reconstruct_char_fn(const SpectrumSet& spectrum, const CharFn& zero_reference, int truncation,
                           const ReconstructionOptions& opts) {
  return product_char_fn(pair_spectra(spectrum, zero_reference, truncation, opts),
                         spectrum.problem + "/reconstructed");
}

}  // namespace qtree
