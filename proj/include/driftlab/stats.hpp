#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace driftlab {

enum class EstimateMethod { BatchMeans, DeltaRatio, PlainMean };

std::string to_string(EstimateMethod method);

struct EstimateWithCI {
    double value = 0.0;
    double se = 0.0;
    std::size_t n = 0;
    EstimateMethod method = EstimateMethod::PlainMean;

    // Acceptance arithmetic uses value +/- 3 se throughout.
    double lower(double k = 3.0) const { return value - k * se; }
    double upper(double k = 3.0) const { return value + k * se; }
    bool covers(double x, double k = 3.0) const { return x >= lower(k) && x <= upper(k); }
};

double mean(const std::vector<double>& v);
double sample_variance(const std::vector<double>& v);
double covariance(const std::vector<double>& x, const std::vector<double>& y);

EstimateWithCI plain_mean(const std::vector<double>& v);
// Batch means over a time series with ceil(sqrt(n)) contiguous batches.
EstimateWithCI batch_means(const std::vector<double>& series);
// Ratio of means sum(num)/sum(den) with delta-method standard error.
EstimateWithCI ratio_of_means(const std::vector<double>& num, const std::vector<double>& den);

double combined_se(const EstimateWithCI& a, const EstimateWithCI& b);
// |a - b| <= k * combined_se
bool agree(const EstimateWithCI& a, const EstimateWithCI& b, double k = 3.0);

double lag1_autocorrelation(const std::vector<double>& v);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
};

// Weighted least squares y = intercept + slope x; weights are 1/se^2 when given.
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y,
                   const std::vector<double>& y_se = {});

} // namespace driftlab
