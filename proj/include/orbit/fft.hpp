#pragma once

#include <unsupported/Eigen/FFT>

#include "orbit/common.hpp"

namespace orbit {

namespace detail {
inline Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> engine;  // caches plans per size
  return engine;
}
}  // namespace detail

// Plain DFT sum: X[k] = sum_n x[n] exp(-2*pi*i*k*n/N).
inline VectorXcd dft_forward(const VectorXcd& x) {
  VectorXcd out(x.size());
  detail::fft_engine().fwd(out, x);
  return out;
}

inline VectorXcd dft_forward_real(const VectorXd& x) {
  VectorXcd xc = x.cast<cplx>();
  return dft_forward(xc);
}

// Inverse with 1/N: x[n] = (1/N) sum_k X[k] exp(+2*pi*i*k*n/N).
inline VectorXcd dft_inverse(const VectorXcd& x) {
  VectorXcd out(x.size());
  detail::fft_engine().inv(out, x);
  return out;
}

// Unitary angular DFT of a ring signal: c[m] = N^{-1/2} sum_l a_l e^{-2pi i m l/N}.
inline VectorXcd unitary_fft(const VectorXd& a) {
  VectorXcd c = dft_forward_real(a);
  c *= 1.0 / std::sqrt(double(a.size()));
  return c;
}

inline VectorXcd unitary_ifft(const VectorXcd& c) {
  VectorXcd a = dft_inverse(c);
  a *= std::sqrt(double(c.size()));
  return a;
}

}  // namespace orbit
