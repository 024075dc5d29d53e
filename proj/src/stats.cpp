#include "driftlab/stats.hpp"

#include <cmath>
#include <numeric>

namespace driftlab {

std::string to_string(EstimateMethod method)
{
    switch (method) {
    case EstimateMethod::BatchMeans: return "BatchMeans";
    case EstimateMethod::DeltaRatio: return "DeltaRatio";
    case EstimateMethod::PlainMean: return "PlainMean";
    }
    return "?";
}

double mean(const std::vector<double>& v)
{
    if (v.empty())
        return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

double covariance(const std::vector<double>& x, const std::vector<double>& y)
{
    std::size_t n = x.size();
    if (n < 2)
        return 0.0;
    double mx = mean(x), my = mean(y);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        s += (x[i] - mx) * (y[i] - my);
    return s / double(n - 1);
}

double sample_variance(const std::vector<double>& v) { return covariance(v, v); }

EstimateWithCI plain_mean(const std::vector<double>& v)
{
    EstimateWithCI e;
    e.n = v.size();
    e.value = mean(v);
    e.se = v.size() > 1 ? std::sqrt(sample_variance(v) / double(v.size())) : 0.0;
    e.method = EstimateMethod::PlainMean;
    return e;
}

EstimateWithCI batch_means(const std::vector<double>& series)
{
    std::size_t n = series.size();
    std::size_t nb = std::size_t(std::ceil(std::sqrt(double(n))));
    EstimateWithCI e;
    e.n = n;
    e.method = EstimateMethod::BatchMeans;
    if (n == 0)
        return e;
    e.value = mean(series);
    if (nb < 2)
        return e;
    std::size_t per = n / nb;
    if (per == 0)
        return e;
    std::vector<double> batches;
    for (std::size_t b = 0; b < nb; ++b) {
        double s = 0.0;
        for (std::size_t i = b * per; i < (b + 1) * per; ++i)
            s += series[i];
        batches.push_back(s / double(per));
    }
    e.se = std::sqrt(sample_variance(batches) / double(nb));
    return e;
}

EstimateWithCI ratio_of_means(const std::vector<double>& num, const std::vector<double>& den)
{
    EstimateWithCI e;
    e.method = EstimateMethod::DeltaRatio;
    e.n = num.size();
    if (num.empty())
        return e;
    double mx = mean(den);
    double r = mean(num) / mx;
    e.value = r;
    if (num.size() < 2)
        return e;
    std::vector<double> resid(num.size());
    for (std::size_t i = 0; i < num.size(); ++i)
        resid[i] = num[i] - r * den[i];
    e.se = std::sqrt(sample_variance(resid) / double(num.size())) / std::fabs(mx);
    return e;
}

double combined_se(const EstimateWithCI& a, const EstimateWithCI& b)
{
    return std::hypot(a.se, b.se);
}

bool agree(const EstimateWithCI& a, const EstimateWithCI& b, double k)
{
    return std::fabs(a.value - b.value) <= k * combined_se(a, b);
}

double lag1_autocorrelation(const std::vector<double>& v)
{
    std::size_t n = v.size();
    if (n < 3)
        return 0.0;
    double m = mean(v);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        den += (v[i] - m) * (v[i] - m);
        if (i + 1 < n)
            num += (v[i] - m) * (v[i + 1] - m);
    }
    return den > 0.0 ? num / den : 0.0;
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y,
                   const std::vector<double>& y_se)
{
    std::size_t n = x.size();
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double w = (y_se.size() == n && y_se[i] > 0.0) ? 1.0 / (y_se[i] * y_se[i]) : 1.0;
        sw += w;
        sx += w * x[i];
        sy += w * y[i];
        sxx += w * x[i] * x[i];
        sxy += w * x[i] * y[i];
    }
    LinearFit fit;
    double det = sw * sxx - sx * sx;
    if (n < 2 || det == 0.0)
        return fit;
    fit.slope = (sw * sxy - sx * sy) / det;
    fit.intercept = (sy - fit.slope * sx) / sw;
    if (y_se.size() == n) {
        fit.slope_se = std::sqrt(sw / det);
    } else if (n > 2) {
        double rss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double r = y[i] - fit.intercept - fit.slope * x[i];
            rss += r * r;
        }
        fit.slope_se = std::sqrt(rss / double(n - 2) * sw / det);
    }
    return fit;
}

} // namespace driftlab
