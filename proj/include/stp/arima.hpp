#pragma once

#include <vector>

namespace stp::arima {

struct ArimaModel {
  int p = 0, d = 0, q = 0;
  double intercept = 0.0;
  std::vector<double> ar;  // phi_1..phi_p
  std::vector<double> ma;  // theta_1..theta_q
  // state needed for forecasting: tail of the (differenced) series and the
  // in-sample residuals
  std::vector<double> diff_tail;  // newest last
  std::vector<double> resid_tail;
  double last_level = 0.0;  // last value of the undifferenced series
  double sigma2 = 0.0;
  double aic = 0.0;
  bool ok = false;
};

// Conditional least squares with Hannan-Rissanen residual estimates for the
// MA terms. Returns ok=false when the series is too short (< 3*(p+q) after
// differencing) or the regression is degenerate.
ArimaModel fit_arima(const std::vector<double>& series, int p, int d, int q);

// Grid search p,q in 1..max_pq, d in {0,1}: each candidate is fit on the
// head of the series and scored by one-step RMSE on a held-out tail, then
// the winner is refit on the full series.
ArimaModel fit_best_arima(const std::vector<double>& series, int max_pq = 10);

// Recursive multi-step forecast; future shocks taken as zero, then the
// differencing is undone.
std::vector<double> forecast(const ArimaModel& model, int horizon);

// Same recursion, but conditioned on an explicit observation history
// (undifferenced levels) instead of the training tail; past shocks are
// taken at their expectation.
std::vector<double> forecast_from(const ArimaModel& model,
                                  const std::vector<double>& recent_levels, int horizon);

}  // namespace stp::arima
