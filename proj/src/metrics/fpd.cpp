#include "lgrit/metrics/fpd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "lgrit/core/error.hpp"

namespace lgrit::metrics {

std::vector<double> cloud_features(const geom::PointCloud& cloud, const FeatureConfig& cfg) {
    if (cloud.empty()) throw ValidationError("fpd features: empty cloud");
    if (!(cfg.range_max > 0.0)) throw ValidationError("fpd features: range_max must be > 0");
    const double n = static_cast<double>(cloud.size());
    std::vector<double> f(kFeatureDim, 0.0);
    for (const auto& p : cloud.points) {
        f[0] += p.x;
        f[1] += p.y;
        f[2] += p.z;
    }
    for (int i = 0; i < 3; ++i) f[i] /= n;
    for (const auto& p : cloud.points) {
        const double d[3] = {p.x - f[0], p.y - f[1], p.z - f[2]};
        f[3] += d[0] * d[0];
        f[4] += d[1] * d[1];
        f[5] += d[2] * d[2];
        f[6] += d[0] * d[1];
        f[7] += d[0] * d[2];
        f[8] += d[1] * d[2];
        const double r = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
        const auto bin = std::min<std::size_t>(kRangeBins - 1, static_cast<std::size_t>(r / cfg.range_max * kRangeBins));
        f[9 + bin] += 1.0;
        const std::size_t oct = (p.x >= 0.0 ? 1 : 0) | (p.y >= 0.0 ? 2 : 0) | (p.z >= 0.0 ? 4 : 0);
        f[9 + kRangeBins + oct] += 1.0;
    }
    for (std::size_t i = 3; i < kFeatureDim; ++i) f[i] /= n;
    return f;
}

FeatureStats feature_stats(const std::vector<std::vector<double>>& features) {
    if (features.empty()) throw ValidationError("fpd: no feature vectors");
    const std::size_t d = features.front().size(), n = features.size();
    if (n < d) {
        throw ValidationError("fpd: " + std::to_string(n) + " samples cannot give a full-rank covariance in " +
                              std::to_string(d) + " dimensions");
    }
    if (n < 2) throw ValidationError("fpd: need at least 2 samples");
    FeatureStats s;
    s.count = n;
    s.mean.assign(d, 0.0);
    for (const auto& f : features) {
        if (f.size() != d) throw ValidationError("fpd: feature vectors differ in length");
        for (std::size_t i = 0; i < d; ++i) s.mean[i] += f[i];
    }
    for (auto& m : s.mean) m /= static_cast<double>(n);
    s.cov.assign(d * d, 0.0);
    for (const auto& f : features)
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) s.cov[i * d + j] += (f[i] - s.mean[i]) * (f[j] - s.mean[j]);
    for (auto& c : s.cov) c /= static_cast<double>(n - 1);
    return s;
}

namespace {

using Mat = Eigen::MatrixXd;

/// Symmetric PSD square root; eigenvalues down to -tol * max are clamped.
Mat psd_sqrt(const Mat& m, const char* which) {
    Eigen::SelfAdjointEigenSolver<Mat> es(m);
    if (es.info() != Eigen::Success) throw NumericalError(std::string("fpd: eigendecomposition failed for ") + which);
    Eigen::VectorXd ev = es.eigenvalues();
    const double hi = std::max(ev.maxCoeff(), 0.0);
    const double tol = 1e-9 * std::max(hi, 1e-300) + 1e-15;
    if (ev.minCoeff() < -tol) {
        throw NumericalError(std::string("fpd: ") + which + " is not positive semidefinite (eigenvalues " +
                             std::to_string(ev.minCoeff()) + " .. " + std::to_string(hi) + ", condition number " +
                             std::to_string(hi / std::max(std::abs(ev.minCoeff()), 1e-300)) + ")");
    }
    for (Eigen::Index i = 0; i < ev.size(); ++i) ev[i] = std::sqrt(std::max(ev[i], 0.0));
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
    const std::size_t d = a.dim();
    if (d == 0 || b.dim() != d || a.cov.size() != d * d || b.cov.size() != d * d) {
        throw ValidationError("fpd: statistics have mismatched dimensions");
    }
    const auto dn = static_cast<Eigen::Index>(d);
    const Mat sa = Eigen::Map<const Mat>(a.cov.data(), dn, dn).transpose();
    const Mat sb = Eigen::Map<const Mat>(b.cov.data(), dn, dn).transpose();
    double mean_term = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean_term += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);
    // tr (Sa Sb)^(1/2) = tr (Sa^(1/2) Sb Sa^(1/2))^(1/2), which stays symmetric.
    const Mat ra = psd_sqrt(sa, "covariance A");
    const Mat inner = ra * sb * ra;
    const Mat root = psd_sqrt(0.5 * (inner + inner.transpose()), "Sa^1/2 Sb Sa^1/2");
    const double value = mean_term + sa.trace() + sb.trace() - 2.0 * root.trace();
    if (!std::isfinite(value)) throw NumericalError("fpd: non-finite distance");
    return std::max(value, 0.0);
}

double fpd(const std::vector<geom::PointCloud>& a, const std::vector<geom::PointCloud>& b, const FeatureConfig& cfg) {
    std::vector<std::vector<double>> fa, fb;
    for (const auto& c : a) fa.push_back(cloud_features(c, cfg));
    for (const auto& c : b) fb.push_back(cloud_features(c, cfg));
    return frechet_distance(feature_stats(fa), feature_stats(fb));
}

}  // namespace lgrit::metrics
