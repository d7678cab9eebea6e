#pragma once

#include <cstddef>
#include <string_view>

namespace xdr::kernels {

// Dense inner loops used by the training and evaluation paths. Every entry
// point has a scalar reference implementation and an AVX2 variant; the
// active backend is picked once at startup (AVX2+FMA when the CPU supports
// it, overridable with XDR_KERNEL_IMPL=scalar|avx2) and stays fixed for the
// lifetime of the process so repeated runs are reproducible.

enum class Backend { scalar, avx2 };

Backend active_backend();
bool set_backend(Backend b);  // false if b is not supported on this CPU
std::string_view backend_name(Backend b);
bool avx2_supported();

double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double* x, double alpha, std::size_t n);
double sum(const double* x, std::size_t n);
double max_value(const double* x, std::size_t n);  // n >= 1
double squared_norm(const double* x, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);

// One fused Adam update over a parameter block. bias1/bias2 are the
// precomputed corrections 1/(1-beta1^t) and 1/(1-beta2^t).
void adam_update(double* param, const double* grad, double* m, double* v,
                 std::size_t n, double lr, double beta1, double beta2,
                 double eps, double bias1, double bias2);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double* x, double alpha, std::size_t n);
double sum(const double* x, std::size_t n);
double max_value(const double* x, std::size_t n);
double squared_norm(const double* x, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void adam_update(double* param, const double* grad, double* m, double* v,
                 std::size_t n, double lr, double beta1, double beta2,
                 double eps, double bias1, double bias2);
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double* x, double alpha, std::size_t n);
double sum(const double* x, std::size_t n);
double max_value(const double* x, std::size_t n);
double squared_norm(const double* x, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void adam_update(double* param, const double* grad, double* m, double* v,
                 std::size_t n, double lr, double beta1, double beta2,
                 double eps, double bias1, double bias2);
}  // namespace avx2

}  // namespace xdr::kernels
