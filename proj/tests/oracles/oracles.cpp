#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oracle {

double supcon(const Matrix& z, const std::vector<int>& labels, double tau, bool mean) {
  const std::size_t n = z.size();
  auto dot = [&](std::size_t a, std::size_t b) {
    long double s = 0;
    for (std::size_t k = 0; k < z[a].size(); ++k) s += (long double)z[a][k] * z[b][k];
    return s;
  };
  long double total = 0;
  int anchors = 0;
  for (std::size_t i = 0; i < n; ++i) {
    long double denom = 0;
    for (std::size_t a = 0; a < n; ++a) {
      if (a != i) denom += std::exp(dot(i, a) / tau);
    }
    long double inner = 0;
    int positives = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if (p == i || labels[p] != labels[i]) continue;
      inner += std::log(std::exp(dot(i, p) / tau) / denom);
      ++positives;
    }
    if (positives == 0) continue;
    total += -inner / positives;
    ++anchors;
  }
  if (mean) return anchors ? double(total / anchors) : 0.0;
  return double(total);
}

double bce(const Matrix& targets, const Matrix& preds) {
  long double sum = 0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    for (std::size_t c = 0; c < targets[r].size(); ++c) {
      const double p = std::min(std::max(preds[r][c], 1e-7), 1.0 - 1e-7);
      const double t = targets[r][c];
      sum += -t * std::log((long double)p) - (1 - t) * std::log1p(-(long double)p);
      ++count;
    }
  }
  return double(sum / count);
}

double dice(const Matrix& masks, const Matrix& probs, double eps) {
  long double total = 0;
  for (std::size_t b = 0; b < masks.size(); ++b) {
    long double inter = 0, m = 0, p = 0;
    for (std::size_t i = 0; i < masks[b].size(); ++i) {
      inter += masks[b][i] * probs[b][i];
      m += masks[b][i];
      p += probs[b][i];
    }
    total += 1 - (2 * inter + eps) / (m + p + eps);
  }
  return double(total / masks.size());
}

Counts confusion(const std::vector<int>& preds, const std::vector<int>& labels) {
  Counts c;
  for (std::size_t i = 0; i < preds.size(); ++i) c.tp += preds[i] == 1 && labels[i] == 1;
  for (std::size_t i = 0; i < preds.size(); ++i) c.fp += preds[i] == 1 && labels[i] == 0;
  for (std::size_t i = 0; i < preds.size(); ++i) c.fn += preds[i] == 0 && labels[i] == 1;
  for (std::size_t i = 0; i < preds.size(); ++i) c.tn += preds[i] == 0 && labels[i] == 0;
  return c;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  long double sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
  }
  const long double mx = sx / n, my = sy / n;
  long double cov = 0, vx = 0, vy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (x[i] - mx) * (y[i] - my);
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  return double(cov / std::sqrt(vx * vy));
}

Matrix hirescam(const std::vector<Matrix>& act, const std::vector<Matrix>& grad) {
  const std::size_t h = act[0].size(), w = act[0][0].size();
  Matrix out(h, std::vector<double>(w, 0.0));
  for (std::size_t c = 0; c < act.size(); ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) out[y][x] += grad[c][y][x] * act[c][y][x];
    }
  }
  for (auto& row : out) {
    for (auto& v : row) v *= double(h * w);
  }
  return out;
}

void lars(std::vector<double>& w, const std::vector<double>& g, std::vector<double>& v, double lr,
          double momentum, double weight_decay, double trust, double eps) {
  double wn = 0, gn = 0;
  for (double x : w) wn += x * x;
  for (double x : g) gn += x * x;
  wn = std::sqrt(wn);
  gn = std::sqrt(gn);
  const double local = wn == 0 ? 1.0 : trust * wn / (gn + weight_decay * wn + eps);
  for (std::size_t i = 0; i < w.size(); ++i) {
    v[i] = momentum * v[i] + lr * local * (g[i] + weight_decay * w[i]);
    w[i] -= v[i];
  }
}

std::vector<double> central_gradient(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> x, double h) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    grad[i] = (up - down) / (2 * h);
  }
  return grad;
}

}  // namespace oracle
