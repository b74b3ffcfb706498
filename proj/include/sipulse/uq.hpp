#pragma once

#include <optional>
#include <vector>

#include "sipulse/core.hpp"

namespace sipulse {

constexpr double kSigmaFloor = 1e-6;

inline double normal_pdf(double z) {
    const double inv_sqrt_2pi = 0.3989422804014326779;
    return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Acklam's rational approximation of the standard normal quantile,
// refined with one Halley step (|error| well below 1e-12).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw argument_error("normal_quantile: p must lie in (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1.0 - plow;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= phigh) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw argument_error("pearson: bad lengths");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va == 0.0 || vb == 0.0)
        throw degenerate_error("pearson: correlation undefined for constant input");
    return cov / std::sqrt(va * vb);
}

struct PulseMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> pcc;  // absent when either series is constant
};

inline PulseMetrics pulse_metrics(const std::vector<double>& pred,
                                  const std::vector<double>& gt) {
    if (pred.size() != gt.size() || pred.empty())
        throw argument_error("pulse_metrics: need equal nonempty lengths");
    PulseMetrics m;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - gt[i];
        m.mae += std::abs(d);
        m.rmse += d * d;
    }
    m.mae /= static_cast<double>(pred.size());
    m.rmse = std::sqrt(m.rmse / static_cast<double>(pred.size()));
    if (pred.size() >= 2) {
        try {
            m.pcc = pearson(pred, gt);
        } catch (const degenerate_error&) {
            m.pcc.reset();
        }
    }
    return m;
}

namespace detail {
inline void check_uq_args(const std::vector<double>& y, const std::vector<double>& mu,
                          const std::vector<double>& sigma) {
    if (y.size() != mu.size() || y.size() != sigma.size() || y.empty())
        throw argument_error("uq: need equal nonempty y/mu/sigma");
    for (size_t i = 0; i < y.size(); ++i)
        if (!std::isfinite(y[i]) || !std::isfinite(mu[i]) || !std::isfinite(sigma[i]) ||
            sigma[i] < 0.0)
            throw numeric_error("uq: non-finite or negative input at index " + std::to_string(i));
}
}  // namespace detail

// Mean over bins of -ln N(y | mu, sigma^2), sigma floored.
inline double gaussian_nll(const std::vector<double>& y, const std::vector<double>& mu,
                           const std::vector<double>& sigma) {
    detail::check_uq_args(y, mu, sigma);
    const double ln_2pi = 1.8378770664093454836;
    double acc = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        const double s = std::max(sigma[i], kSigmaFloor);
        const double z = (y[i] - mu[i]) / s;
        acc += 0.5 * ln_2pi + std::log(s) + 0.5 * z * z;
    }
    return acc / static_cast<double>(y.size());
}

// Non-negative closed form: sigma * [z (2 Phi(z) - 1) + 2 pdf(z) - 1/sqrt(pi)].
inline double crps_gaussian(const std::vector<double>& y, const std::vector<double>& mu,
                            const std::vector<double>& sigma) {
    detail::check_uq_args(y, mu, sigma);
    const double inv_sqrt_pi = 0.5641895835477562869;
    double acc = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        const double s = std::max(sigma[i], kSigmaFloor);
        const double z = (y[i] - mu[i]) / s;
        acc += s * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - inv_sqrt_pi);
    }
    return acc / static_cast<double>(y.size());
}

// Mean predictive variance.
inline double sharpness(const std::vector<double>& sigma) {
    if (sigma.empty()) throw argument_error("sharpness: empty input");
    double acc = 0.0;
    for (double s : sigma) {
        if (s < 0.0) throw argument_error("sharpness: negative sigma");
        acc += s * s;
    }
    return acc / static_cast<double>(sigma.size());
}

// Mean pinball loss over bins and quantile levels; predictions are the
// Gaussian quantiles of (mu, sigma).
inline double check_score(const std::vector<double>& y, const std::vector<double>& mu,
                          const std::vector<double>& sigma, const std::vector<double>& taus) {
    detail::check_uq_args(y, mu, sigma);
    if (taus.empty()) throw argument_error("check_score: empty tau grid");
    for (double tau : taus)
        if (!(tau > 0.0 && tau < 1.0)) throw argument_error("check_score: tau outside (0,1)");

    double acc = 0.0;
    for (double tau : taus) {
        const double zq = normal_quantile(tau);
        for (size_t i = 0; i < y.size(); ++i) {
            const double s = std::max(sigma[i], kSigmaFloor);
            const double pred = mu[i] + s * zq;
            acc += y[i] >= pred ? (y[i] - pred) * tau : (pred - y[i]) * (1.0 - tau);
        }
    }
    return acc / (static_cast<double>(y.size()) * static_cast<double>(taus.size()));
}

// Pinball loss against explicitly supplied quantile predictions, one vector
// per tau.
inline double check_score_quantiles(const std::vector<double>& y,
                                    const std::vector<std::vector<double>>& quantile_preds,
                                    const std::vector<double>& taus) {
    if (quantile_preds.size() != taus.size() || taus.empty())
        throw argument_error("check_score: quantile/tau count mismatch");
    double acc = 0.0;
    for (size_t j = 0; j < taus.size(); ++j) {
        const double tau = taus[j];
        if (!(tau > 0.0 && tau < 1.0)) throw argument_error("check_score: tau outside (0,1)");
        const std::vector<double>& pred = quantile_preds[j];
        if (pred.size() != y.size()) throw argument_error("check_score: length mismatch");
        for (size_t i = 0; i < y.size(); ++i)
            acc += y[i] >= pred[i] ? (y[i] - pred[i]) * tau : (pred[i] - y[i]) * (1.0 - tau);
    }
    return acc / (static_cast<double>(y.size()) * static_cast<double>(taus.size()));
}

// (U-L) + (2/alpha) penalties outside the interval, averaged over bins.
inline double interval_score(const std::vector<double>& y, const std::vector<double>& lo,
                             const std::vector<double>& hi, double alpha) {
    if (y.size() != lo.size() || y.size() != hi.size() || y.empty())
        throw argument_error("interval_score: length mismatch");
    if (!(alpha > 0.0 && alpha < 1.0)) throw argument_error("interval_score: alpha outside (0,1)");
    double acc = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        if (lo[i] > hi[i]) throw argument_error("interval_score: L > U at index " + std::to_string(i));
        acc += hi[i] - lo[i];
        if (y[i] < lo[i]) acc += 2.0 / alpha * (lo[i] - y[i]);
        if (y[i] > hi[i]) acc += 2.0 / alpha * (y[i] - hi[i]);
    }
    return acc / static_cast<double>(y.size());
}

inline std::vector<double> default_levels() {
    std::vector<double> levels;
    for (int k = 1; k <= 19; ++k) levels.push_back(0.05 * k);
    return levels;
}

inline std::vector<double> default_taus() { return default_levels(); }

struct CalibrationCurve {
    std::vector<double> levels;    // predicted central-interval probability
    std::vector<double> observed;  // fraction of bins covered
    double miscalibration_area = 0.0;
};

// Coverage of central Gaussian p-intervals. Perfect calibration lands on the
// diagonal; the area is the mean |observed - predicted| over levels.
inline CalibrationCurve calibration_curve(const std::vector<double>& y,
                                          const std::vector<double>& mu,
                                          const std::vector<double>& sigma,
                                          std::vector<double> levels = default_levels()) {
    detail::check_uq_args(y, mu, sigma);
    if (levels.empty()) throw argument_error("calibration_curve: empty level grid");
    for (double p : levels)
        if (!(p > 0.0 && p < 1.0)) throw argument_error("calibration_curve: level outside (0,1)");

    CalibrationCurve out;
    out.levels = std::move(levels);
    for (double p : out.levels) {
        const double zc = normal_quantile(0.5 * (1.0 + p));
        size_t covered = 0;
        for (size_t i = 0; i < y.size(); ++i) {
            const double s = std::max(sigma[i], kSigmaFloor);
            if (std::abs(y[i] - mu[i]) <= zc * s) ++covered;
        }
        const double obs = static_cast<double>(covered) / static_cast<double>(y.size());
        out.observed.push_back(obs);
        out.miscalibration_area += std::abs(obs - p);
    }
    out.miscalibration_area /= static_cast<double>(out.levels.size());
    return out;
}

struct SpectrumMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    double r2 = 0.0;
    std::optional<double> pcc;
};

// Regression metrics over bins, both spectra max-normalized first.
inline SpectrumMetrics spectrum_metrics(const std::vector<double>& pred,
                                        const std::vector<double>& gt) {
    if (pred.size() != gt.size() || pred.size() < 2)
        throw argument_error("spectrum_metrics: grid mismatch");

    auto max_normalize = [](std::vector<double> v) {
        double m = 0.0;
        for (double x : v) m = std::max(m, std::abs(x));
        if (m > 0.0)
            for (double& x : v) x /= m;
        return v;
    };
    const std::vector<double> p = max_normalize(pred);
    const std::vector<double> g = max_normalize(gt);

    SpectrumMetrics m;
    double gmean = 0.0;
    for (double x : g) gmean += x;
    gmean /= static_cast<double>(g.size());

    double ss_res = 0.0, ss_tot = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - g[i];
        m.mae += std::abs(d);
        ss_res += d * d;
        ss_tot += (g[i] - gmean) * (g[i] - gmean);
    }
    m.mae /= static_cast<double>(p.size());
    m.rmse = std::sqrt(ss_res / static_cast<double>(p.size()));
    m.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
    try {
        m.pcc = pearson(p, g);
    } catch (const degenerate_error&) {
        m.pcc.reset();
    }
    return m;
}

struct BlandAltman {
    double mean_diff = 0.0;
    double sd_diff = 0.0;
    double loa_lo = 0.0;
    double loa_hi = 0.0;
    std::vector<double> means;  // per-point (pred+gt)/2, for plotting
    std::vector<double> diffs;  // per-point pred-gt
};

inline BlandAltman bland_altman(const std::vector<double>& pred, const std::vector<double>& gt) {
    if (pred.size() != gt.size() || pred.size() < 2)
        throw argument_error("bland_altman: need equal lengths >= 2");
    BlandAltman ba;
    const double n = static_cast<double>(pred.size());
    for (size_t i = 0; i < pred.size(); ++i) {
        ba.diffs.push_back(pred[i] - gt[i]);
        ba.means.push_back(0.5 * (pred[i] + gt[i]));
        ba.mean_diff += ba.diffs.back();
    }
    ba.mean_diff /= n;
    double var = 0.0;
    for (double d : ba.diffs) var += (d - ba.mean_diff) * (d - ba.mean_diff);
    ba.sd_diff = std::sqrt(var / (n - 1.0));
    ba.loa_lo = ba.mean_diff - 1.96 * ba.sd_diff;
    ba.loa_hi = ba.mean_diff + 1.96 * ba.sd_diff;
    return ba;
}

struct UncertaintyReport {
    std::vector<double> mean;   // per bin, over realizations
    std::vector<double> stddev;
    double nll = 0.0;
    double crps = 0.0;
    double sharpness = 0.0;
    double check_score = 0.0;
    double interval_score = 0.0;
    CalibrationCurve calibration;
};

inline UncertaintyReport build_uncertainty_report(const std::vector<double>& y,
                                                  const std::vector<double>& mu,
                                                  const std::vector<double>& sigma,
                                                  double alpha = 0.05) {
    UncertaintyReport rep;
    rep.mean = mu;
    rep.stddev = sigma;
    rep.nll = gaussian_nll(y, mu, sigma);
    rep.crps = crps_gaussian(y, mu, sigma);
    rep.sharpness = sipulse::sharpness(sigma);
    rep.check_score = check_score(y, mu, sigma, default_taus());
    const double zc = normal_quantile(1.0 - 0.5 * alpha);
    std::vector<double> lo(y.size()), hi(y.size());
    for (size_t i = 0; i < y.size(); ++i) {
        const double s = std::max(sigma[i], kSigmaFloor);
        lo[i] = mu[i] - zc * s;
        hi[i] = mu[i] + zc * s;
    }
    rep.interval_score = interval_score(y, lo, hi, alpha);
    rep.calibration = calibration_curve(y, mu, sigma);
    return rep;
}

}  // namespace sipulse
