#include "darcygp/fft.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include <fftw3.h>

namespace darcygp {

namespace {

// FFTW's planner is not thread-safe; execution with the new-array interface is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

const RealFft& RealFft::of_size(std::size_t n) {
  // The mutex must outlive the cache, whose destructors lock it.
  auto& mutex = planner_mutex();
  static std::map<std::size_t, std::unique_ptr<RealFft>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot.reset(new RealFft(n));
  return *slot;
}

RealFft::RealFft(std::size_t n) : n_(n), forward_plan_(nullptr), inverse_plan_(nullptr) {
  if (n == 0) throw std::invalid_argument("FFT length must be positive");
  std::vector<double> real(n);
  std::vector<std::complex<double>> spec(n / 2 + 1);
  auto* c = reinterpret_cast<fftw_complex*>(spec.data());
  const int len = static_cast<int>(n);
  // FFTW_UNALIGNED keeps the chosen codelets independent of buffer alignment,
  // so results are bitwise reproducible for any caller-provided storage.
  forward_plan_ = fftw_plan_dft_r2c_1d(len, real.data(), c, FFTW_ESTIMATE | FFTW_UNALIGNED);
  inverse_plan_ = fftw_plan_dft_c2r_1d(len, c, real.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!forward_plan_ || !inverse_plan_) throw std::runtime_error("FFTW planning failed");
}

RealFft::~RealFft() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) const {
  if (in.size() != n_ || out.size() != spectrum_size()) throw std::invalid_argument("FFT buffer size mismatch");
  // r2c out-of-place leaves the input untouched.
  fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_plan_), const_cast<double*>(in.data()),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) const {
  if (in.size() != spectrum_size() || out.size() != n_) throw std::invalid_argument("FFT buffer size mismatch");
  // c2r overwrites its input.
  std::vector<std::complex<double>> scratch(in.begin(), in.end());
  fftw_execute_dft_c2r(static_cast<fftw_plan>(inverse_plan_), reinterpret_cast<fftw_complex*>(scratch.data()),
                       out.data());
}

}  // namespace darcygp
