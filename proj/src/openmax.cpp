#include "osdn/openmax.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "osdn/ops.hpp"

namespace osdn {

int OpenMaxConfig::resolved_sigma(int c) const { return sigma > 0 ? sigma : std::min(3, c); }

void OpenMaxConfig::validate(int c) const {
  const int s = resolved_sigma(c);
  require(s >= 1 && s <= c, "OpenMaxConfig: sigma must be in [1," + std::to_string(c) + "]");
  require(tail_size == 0 || tail_size >= 2, "OpenMaxConfig: tail_size must be >= 2");
  require(threshold > 0.0 && threshold < 1.0, "OpenMaxConfig: threshold must be in (0,1)");
}

std::vector<double> compute_mav(const std::vector<std::vector<double>>& latents) {
  require(!latents.empty(), "compute_mav: no samples");
  const size_t d = latents[0].size();
  std::vector<double> mu(d, 0.0);
  for (const auto& v : latents) {
    require(v.size() == d, "compute_mav: inconsistent latent dimensionality");
    for (size_t i = 0; i < d; ++i) mu[i] += v[i];
  }
  for (double& m : mu) m /= static_cast<double>(latents.size());
  return mu;
}

namespace {

// Profile-likelihood equation for the Weibull shape on data normalized to
// (0,1]: g(k) = sum z^k ln z / sum z^k - 1/k - mean(ln z). Monotonically
// increasing in k; the MLE shape is its unique root.
double shape_equation(const std::vector<double>& z, const std::vector<double>& logz, double k,
                      double mean_logz) {
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < z.size(); ++i) {
    const double zk = std::pow(z[i], k);
    num += zk * logz[i];
    den += zk;
  }
  return num / den - 1.0 / k - mean_logz;
}

}  // namespace

WeibullFit fit_weibull_tail(std::vector<double> distances, int tail_size) {
  require(tail_size >= 2, "fit_weibull_tail: tail_size must be >= 2");
  require(static_cast<int>(distances.size()) >= tail_size,
          "fit_weibull_tail: need at least tail_size distances, got " +
              std::to_string(distances.size()));
  for (double d : distances)
    require(std::isfinite(d) && d > 0.0, "fit_weibull_tail: distances must be finite positive");

  std::sort(distances.begin(), distances.end(), std::greater<double>());
  distances.resize(static_cast<size_t>(tail_size));
  const double mx = distances.front();
  const double mn = distances.back();
  if (mx == mn) return {100.0, mx};  // degenerate tail

  std::vector<double> z(distances.size()), logz(distances.size());
  double mean_logz = 0.0;
  for (size_t i = 0; i < distances.size(); ++i) {
    z[i] = distances[i] / mx;
    logz[i] = std::log(z[i]);
    mean_logz += logz[i];
  }
  mean_logz /= static_cast<double>(z.size());

  double lo = 1e-3, hi = 2.0;
  const double cap = 1e6;
  while (shape_equation(z, logz, hi, mean_logz) < 0.0 && hi < cap) hi *= 2.0;
  double k = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    k = 0.5 * (lo + hi);
    if ((hi - lo) / k < 1e-10) break;
    if (shape_equation(z, logz, k, mean_logz) < 0.0)
      lo = k;
    else
      hi = k;
  }

  double sum_zk = 0.0;
  for (double zi : z) sum_zk += std::pow(zi, k);
  const double scale_z = std::pow(sum_zk / static_cast<double>(z.size()), 1.0 / k);
  return {k, scale_z * mx};
}

double weibull_log_likelihood(const std::vector<double>& xs, double shape, double scale) {
  double ll = 0.0;
  for (double x : xs) {
    const double r = x / scale;
    ll += std::log(shape / scale) + (shape - 1.0) * std::log(r) - std::pow(r, shape);
  }
  return ll;
}

namespace {

// 0-based descending ranks; ties broken by class index for determinism.
std::vector<int> descending_ranks(const std::vector<double>& logits) {
  std::vector<int> order(logits.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return logits[static_cast<size_t>(a)] > logits[static_cast<size_t>(b)];
  });
  std::vector<int> rank(logits.size());
  for (size_t pos = 0; pos < order.size(); ++pos)
    rank[static_cast<size_t>(order[pos])] = static_cast<int>(pos);
  return rank;
}

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

std::vector<double> belief_weights(const std::vector<double>& latent,
                                   const std::vector<double>& logits,
                                   const std::vector<WeibullClassModel>& models, int sigma) {
  const size_t c = logits.size();
  require(models.size() == c, "belief_weights: " + std::to_string(models.size()) +
                                  " models for " + std::to_string(c) + " classes");
  require(sigma >= 1, "belief_weights: sigma must be >= 1");
  const std::vector<int> rank = descending_ranks(logits);
  std::vector<double> w(c, 1.0);
  for (size_t i = 0; i < c; ++i) {
    const WeibullClassModel& m = models[i];
    require(m.shape > 0.0 && m.scale > 0.0,
            "belief_weights: class " + std::to_string(i) + " has no fitted model");
    require(m.mu.size() == latent.size(), "belief_weights: latent dimensionality mismatch");
    const double coef =
        std::max(0.0, (static_cast<double>(sigma) - rank[i]) / static_cast<double>(sigma));
    if (coef == 0.0) continue;  // ranked below sigma: w_i stays exactly 1
    const double dist = euclidean(latent, m.mu);
    w[i] = 1.0 - coef * std::exp(-std::pow(dist / m.scale, m.shape));
  }
  return w;
}

std::vector<double> openmax_probs(const std::vector<double>& logits,
                                  const std::vector<double>& latent,
                                  const std::vector<WeibullClassModel>& models, int sigma) {
  const size_t c = logits.size();
  const std::vector<double> w = belief_weights(latent, logits, models, sigma);
  std::vector<double> revised(c + 1, 0.0);
  double open_logit = 0.0;
  for (size_t i = 0; i < c; ++i) {
    revised[i] = logits[i] * w[i];
    open_logit += logits[i] * (1.0 - w[i]);
  }
  revised[c] = open_logit;
  return softmax_vec(revised);
}

Calibration calibrate(const OsdnModel& model, const Tensor& x, const std::vector<int>& labels,
                      const OpenMaxConfig& cfg) {
  const int c = model.arch().num_known;
  cfg.validate(c);
  require(x.ndim() == 4 && x.dim(0) == static_cast<int>(labels.size()),
          "calibrate: batch/label size mismatch");

  Tensor lat, logits;
  model.latents_and_logits(x, &lat, &logits);
  const int n = lat.dim(0), d = lat.dim(1);

  std::vector<std::vector<std::vector<double>>> per_class(static_cast<size_t>(c));
  for (int i = 0; i < n; ++i) {
    int pred = 0;
    for (int j = 1; j < c; ++j)
      if (logits[i * c + j] > logits[i * c + pred]) pred = j;
    if (pred != labels[static_cast<size_t>(i)]) continue;
    std::vector<double> v(lat.data() + i * d, lat.data() + (i + 1) * d);
    per_class[static_cast<size_t>(pred)].push_back(std::move(v));
  }

  Calibration cal;
  cal.sigma = cfg.resolved_sigma(c);
  cal.threshold = cfg.threshold;
  for (int cls = 0; cls < c; ++cls) {
    const auto& samples = per_class[static_cast<size_t>(cls)];
    require(!samples.empty(),
            "calibrate: class " + std::to_string(cls) + " has no correctly-classified samples");
    WeibullClassModel m;
    m.class_id = cls;
    m.mu = compute_mav(samples);
    std::vector<double> dist;
    dist.reserve(samples.size());
    for (const auto& v : samples) dist.push_back(std::max(euclidean(v, m.mu), 1e-12));
    const int n_c = static_cast<int>(dist.size());
    int tail = cfg.tail_size > 0 ? cfg.tail_size : std::max(20, n_c / 10);
    tail = std::min(tail, n_c);
    if (tail < 2) {
      // Too few samples to fit a tail; pessimistic near-point model.
      m.shape = 100.0;
      m.scale = dist.front();
      m.tail_size = n_c;
    } else {
      const WeibullFit fit = fit_weibull_tail(dist, tail);
      m.shape = fit.shape;
      m.scale = fit.scale;
      m.tail_size = tail;
    }
    cal.models.push_back(std::move(m));
  }
  return cal;
}

Tensor openmax_batch(const OsdnModel& model, const Calibration& cal, const Tensor& x) {
  const int c = static_cast<int>(cal.models.size());
  Tensor lat, logits;
  model.latents_and_logits(x, &lat, &logits);
  require(logits.dim(1) == c, "openmax_batch: model classes do not match calibration");
  const int n = lat.dim(0), d = lat.dim(1);
  Tensor out({n, c + 1});
  for (int i = 0; i < n; ++i) {
    std::vector<double> v(lat.data() + i * d, lat.data() + (i + 1) * d);
    std::vector<double> l(logits.data() + i * c, logits.data() + (i + 1) * c);
    const std::vector<double> probs = openmax_probs(l, v, cal.models, cal.sigma);
    for (int j = 0; j <= c; ++j) out[i * (c + 1) + j] = probs[static_cast<size_t>(j)];
  }
  return out;
}

// --- calibration io ------------------------------------------------------

void Calibration::save(const std::string& path) const {
  std::ofstream os(path);
  require(os.good(), "calibration: cannot write " + path);
  os << std::setprecision(17);
  os << "osdn-calibration v1\n";
  os << "classes " << models.size() << " sigma " << sigma << " threshold " << threshold << '\n';
  for (const WeibullClassModel& m : models) {
    os << "class " << m.class_id << " tail " << m.tail_size << " shape " << m.shape << " scale "
       << m.scale << " dim " << m.mu.size() << '\n';
    for (size_t i = 0; i < m.mu.size(); ++i) {
      if (i) os << ' ';
      os << m.mu[i];
    }
    os << '\n';
  }
  os << "end\n";
  require(os.good(), "calibration: write failed for " + path);
}

Calibration Calibration::load(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "calibration: cannot read " + path);
  std::string magic, version, tok;
  is >> magic >> version;
  require(magic == "osdn-calibration" && version == "v1",
          "calibration: bad header in " + path);
  Calibration cal;
  size_t n = 0;
  is >> tok >> n;
  require(tok == "classes", "calibration: missing classes record");
  is >> tok >> cal.sigma;
  is >> tok >> cal.threshold;
  for (size_t i = 0; i < n; ++i) {
    WeibullClassModel m;
    size_t dim = 0;
    is >> tok >> m.class_id >> tok >> m.tail_size >> tok >> m.shape >> tok >> m.scale >> tok >>
        dim;
    m.mu.resize(dim);
    for (double& x : m.mu) is >> x;
    require(is.good(), "calibration: truncated file " + path);
    cal.models.push_back(std::move(m));
  }
  is >> tok;
  require(tok == "end", "calibration: missing end marker in " + path);
  return cal;
}

}  // namespace osdn
