#pragma once

#include <complex>
#include <cstddef>
#include <span>

namespace darcygp {

/// Real-to-complex DFT of a fixed length, unnormalized, X_k = sum_j x_j e^{-2 pi i jk/n}.
///
/// Plans are created once per length and shared; execution is thread-safe.
class RealFft {
 public:
  /// Cached transform for length n (created on first use).
  static const RealFft& of_size(std::size_t n);

  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  [[nodiscard]] std::size_t size() const { return n_; }
  [[nodiscard]] std::size_t spectrum_size() const { return n_ / 2 + 1; }

  /// `out` receives the n/2 + 1 non-redundant coefficients.
  void forward(std::span<const double> in, std::span<std::complex<double>> out) const;

  /// Unnormalized inverse: forward followed by inverse multiplies by n.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out) const;

 private:
  explicit RealFft(std::size_t n);
  std::size_t n_;
  void* forward_plan_;
  void* inverse_plan_;
};

}  // namespace darcygp
