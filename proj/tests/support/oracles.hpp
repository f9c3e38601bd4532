#pragma once

// Reference implementations written independently of the library, one neuron
// or one token at a time.

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

struct ScalarState {
  double spk = 0, isc = 0, v = 0;
};

template <typename T>
struct Trace {
  std::vector<T> spk, isc, v;
};

// Single-neuron LIF with the one-step-delayed reset.
template <typename T>
Trace<T> scalar_lif(T w_scd, T w_vd, T v_thr, bool ternary,
                    const std::vector<T>& drive) {
  Trace<T> out;
  T spk = 0, isc = 0, v = 0;
  for (T d : drive) {
    T keep = 1;
    if (spk != 0) keep = 0;
    isc = w_scd * isc + d;
    v = w_vd * v * keep + isc;
    if (ternary) {
      if (v >= v_thr)
        spk = 1;
      else if (v <= -v_thr)
        spk = -1;
      else
        spk = 0;
    } else {
      spk = (v - v_thr >= 0) ? 1 : 0;
    }
    out.spk.push_back(spk);
    out.isc.push_back(isc);
    out.v.push_back(v);
  }
  return out;
}

// Per-token matrix-vector product for the output layer.
inline std::vector<double> matvec(const std::vector<double>& w, std::size_t rows,
                                  std::size_t cols, const std::vector<double>& x,
                                  const std::vector<double>& b) {
  std::vector<double> y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < cols; ++c) s += w[r * cols + c] * x[c];
    y[r] = s + b[r];
  }
  return y;
}

}  // namespace oracle
