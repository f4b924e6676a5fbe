#pragma once

#include <cstddef>
#include <vector>

namespace fedidm {

// Vectors are plain double buffers. Updates, flattened model weights and
// embeddings all share this representation; meaning lives at call sites.
using Vec = std::vector<double>;

/// Dense row-major matrix.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

double dot(const Vec& a, const Vec& b);
double l2_norm(const Vec& v);

/// Cosine of the angle between a and b, clamped to [-1, 1].
/// Throws on length mismatch or when either vector has zero norm.
double cosine_similarity(const Vec& a, const Vec& b);

/// v / ||v||. Throws "degenerate direction" when ||v|| == 0.
Vec l2_normalize(const Vec& v);

/// Median (mean of the two middle values for even length). Takes a copy.
double median_scalar(std::vector<double> xs);

/// Numerically stable softmax (max subtraction).
Vec softmax(const Vec& logits);

/// Standard normal CDF.
double normal_cdf(double x);

/// Quantile of the standard normal. Rational approximation refined by one
/// Newton step; |normal_cdf(result) - p| stays well inside 1e-8.
double inv_normal_cdf(double p);

/// Index of the largest entry; ties resolve to the lowest index.
std::size_t argmax_index(const Vec& v);

Vec vec_add(const Vec& a, const Vec& b);
Vec vec_sub(const Vec& a, const Vec& b);
Vec vec_scale(const Vec& a, double c);
/// dst += c * src
void vec_add_scaled(Vec& dst, const Vec& src, double c);

/// Throws std::runtime_error naming `what` if any entry is NaN or infinite.
void check_finite(const Vec& v, const char* what);

}  // namespace fedidm
