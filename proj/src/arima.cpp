#include "stp/arima.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

namespace stp::arima {

namespace {

std::vector<double> difference(const std::vector<double>& x, int d) {
  std::vector<double> out = x;
  for (int k = 0; k < d; ++k) {
    std::vector<double> next;
    for (size_t i = 1; i < out.size(); ++i) next.push_back(out[i] - out[i - 1]);
    out = std::move(next);
  }
  return out;
}

// Long-AR regression residuals, the Hannan-Rissanen first stage.
std::vector<double> long_ar_residuals(const std::vector<double>& x) {
  int n = static_cast<int>(x.size());
  int m = std::min(20, n / 4);
  if (m < 1) return std::vector<double>(x.size(), 0.0);
  int rows = n - m;
  Eigen::MatrixXd X(rows, m + 1);
  Eigen::VectorXd y(rows);
  for (int t = m; t < n; ++t) {
    int r = t - m;
    y(r) = x[t];
    X(r, 0) = 1.0;
    for (int j = 1; j <= m; ++j) X(r, j) = x[t - j];
  }
  Eigen::VectorXd beta = (X.transpose() * X)
                             .ldlt()
                             .solve(X.transpose() * y);
  std::vector<double> resid(x.size(), 0.0);
  for (int t = m; t < n; ++t) {
    double pred = beta(0);
    for (int j = 1; j <= m; ++j) pred += beta(j) * x[t - j];
    resid[t] = x[t] - pred;
  }
  return resid;
}

}  // namespace

ArimaModel fit_arima(const std::vector<double>& series, int p, int d, int q) {
  ArimaModel m;
  m.p = p;
  m.d = d;
  m.q = q;
  if (series.empty()) return m;
  m.last_level = series.back();

  std::vector<double> x = difference(series, d);
  int n = static_cast<int>(x.size());
  if (n < 3 * (p + q) || n <= p + q + 1) return m;

  std::vector<double> e = q > 0 ? long_ar_residuals(x) : std::vector<double>(x.size(), 0.0);

  int lag = std::max(p, q);
  int rows = n - lag;
  int cols = 1 + p + q;
  if (rows <= cols) return m;
  Eigen::MatrixXd X(rows, cols);
  Eigen::VectorXd y(rows);
  for (int t = lag; t < n; ++t) {
    int r = t - lag;
    y(r) = x[t];
    X(r, 0) = 1.0;
    for (int j = 1; j <= p; ++j) X(r, j) = x[t - j];
    for (int j = 1; j <= q; ++j) X(r, p + j) = e[t - j];
  }
  Eigen::MatrixXd xtx = X.transpose() * X;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
  if (ldlt.info() != Eigen::Success) return m;
  Eigen::VectorXd beta = ldlt.solve(X.transpose() * y);
  if (!beta.allFinite()) return m;

  m.intercept = beta(0);
  m.ar.assign(p, 0.0);
  m.ma.assign(q, 0.0);
  for (int j = 0; j < p; ++j) m.ar[j] = beta(1 + j);
  for (int j = 0; j < q; ++j) m.ma[j] = beta(1 + p + j);

  // refreshed residuals under the fitted model, for forecasting
  std::vector<double> resid(x.size(), 0.0);
  double sse = 0.0;
  for (int t = lag; t < n; ++t) {
    double pred = m.intercept;
    for (int j = 1; j <= p; ++j) pred += m.ar[j - 1] * x[t - j];
    for (int j = 1; j <= q; ++j) pred += m.ma[j - 1] * resid[t - j];
    resid[t] = x[t] - pred;
    sse += resid[t] * resid[t];
  }
  m.sigma2 = sse / rows;
  if (!(m.sigma2 >= 0.0) || !std::isfinite(m.sigma2)) return m;
  m.aic = rows * std::log(std::max(m.sigma2, 1e-300)) + 2.0 * (p + q + 1);

  int keep = std::max(lag, 1);
  m.diff_tail.assign(x.end() - std::min<size_t>(keep, x.size()), x.end());
  m.resid_tail.assign(resid.end() - std::min<size_t>(keep, resid.size()), resid.end());
  m.ok = true;
  return m;
}

ArimaModel fit_best_arima(const std::vector<double>& series, int max_pq) {
  int n = static_cast<int>(series.size());
  int n_val = std::max(4, n / 5);
  std::vector<double> head(series.begin(), series.end() - std::min(n_val, n > 4 ? n - 4 : 0));

  int best_p = 0, best_d = 0, best_q = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (int d = 0; d <= 1; ++d)
    for (int p = 1; p <= max_pq; ++p)
      for (int q = 1; q <= max_pq; ++q) {
        ArimaModel m = fit_arima(head, p, d, q);
        if (!m.ok) continue;
        // one-step walk-forward over the held-out tail
        double sse = 0.0;
        int cnt = 0;
        for (size_t i = head.size(); i < series.size(); ++i) {
          std::vector<double> hist(series.begin(), series.begin() + static_cast<long>(i));
          std::vector<double> fc = forecast_from(m, hist, 1);
          if (fc.empty() || !std::isfinite(fc[0])) { cnt = 0; break; }
          sse += (fc[0] - series[i]) * (fc[0] - series[i]);
          ++cnt;
        }
        if (cnt == 0) continue;
        double score = std::sqrt(sse / cnt);
        if (score < best_score) {
          best_score = score;
          best_p = p;
          best_d = d;
          best_q = q;
        }
      }

  ArimaModel best;
  if (best_p > 0) best = fit_arima(series, best_p, best_d, best_q);
  if (!best.ok) {
    // fall back to a pure AR(1) on short series
    for (int d = 0; d <= 1 && !best.ok; ++d) best = fit_arima(series, 1, d, 0);
  }
  return best;
}

std::vector<double> forecast(const ArimaModel& model, int horizon) {
  std::vector<double> out;
  if (horizon <= 0) return out;
  std::vector<double> hist = model.diff_tail;
  std::vector<double> shocks = model.resid_tail;
  std::vector<double> diff_fc;
  for (int h = 0; h < horizon; ++h) {
    double pred = model.intercept;
    for (int j = 0; j < model.p; ++j) {
      size_t k = hist.size();
      double xv = k > static_cast<size_t>(j) ? hist[k - 1 - j] : 0.0;
      pred += model.ar[j] * xv;
    }
    for (int j = 0; j < model.q; ++j) {
      size_t k = shocks.size();
      double ev = k > static_cast<size_t>(j) ? shocks[k - 1 - j] : 0.0;
      pred += model.ma[j] * ev;
    }
    hist.push_back(pred);
    shocks.push_back(0.0);  // future shocks at their expectation
    diff_fc.push_back(pred);
  }
  if (model.d == 0) return diff_fc;
  double level = model.last_level;
  for (double dv : diff_fc) {
    level += dv;
    out.push_back(level);
  }
  return out;
}

std::vector<double> forecast_from(const ArimaModel& model,
                                  const std::vector<double>& recent_levels, int horizon) {
  if (horizon <= 0 || recent_levels.empty()) return {};
  ArimaModel m = model;
  m.last_level = recent_levels.back();
  std::vector<double> x = difference(recent_levels, model.d);
  int keep = std::max(std::max(model.p, model.q), 1);
  if (static_cast<int>(x.size()) > keep) x.erase(x.begin(), x.end() - keep);
  m.diff_tail = x;
  m.resid_tail.assign(x.size(), 0.0);
  return forecast(m, horizon);
}

}  // namespace stp::arima
