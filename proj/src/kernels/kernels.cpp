#include "xdr/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace xdr::kernels {

namespace {

struct Table {
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scale)(double*, double, std::size_t);
  double (*sum)(const double*, std::size_t);
  double (*max_value)(const double*, std::size_t);
  double (*squared_norm)(const double*, std::size_t);
  double (*squared_distance)(const double*, const double*, std::size_t);
  void (*adam_update)(double*, const double*, double*, double*, std::size_t,
                      double, double, double, double, double, double);
};

constexpr Table kScalar{scalar::dot,          scalar::axpy,
                        scalar::scale,        scalar::sum,
                        scalar::max_value,    scalar::squared_norm,
                        scalar::squared_distance, scalar::adam_update};

constexpr Table kAvx2{avx2::dot,          avx2::axpy,
                      avx2::scale,        avx2::sum,
                      avx2::max_value,    avx2::squared_norm,
                      avx2::squared_distance, avx2::adam_update};

struct Dispatch {
  Backend backend;
  const Table* table;
  Dispatch() {
    backend = avx2_supported() ? Backend::avx2 : Backend::scalar;
    if (const char* env = std::getenv("XDR_KERNEL_IMPL")) {
      if (std::strcmp(env, "scalar") == 0) backend = Backend::scalar;
      if (std::strcmp(env, "avx2") == 0 && avx2_supported())
        backend = Backend::avx2;
    }
    table = backend == Backend::avx2 ? &kAvx2 : &kScalar;
  }
};

Dispatch& dispatch() {
  static Dispatch d;
  return d;
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend active_backend() { return dispatch().backend; }

bool set_backend(Backend b) {
  if (b == Backend::avx2 && !avx2_supported()) return false;
  dispatch().backend = b;
  dispatch().table = b == Backend::avx2 ? &kAvx2 : &kScalar;
  return true;
}

std::string_view backend_name(Backend b) {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

double dot(const double* a, const double* b, std::size_t n) {
  return dispatch().table->dot(a, b, n);
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  dispatch().table->axpy(alpha, x, y, n);
}
void scale(double* x, double alpha, std::size_t n) {
  dispatch().table->scale(x, alpha, n);
}
double sum(const double* x, std::size_t n) {
  return dispatch().table->sum(x, n);
}
double max_value(const double* x, std::size_t n) {
  return dispatch().table->max_value(x, n);
}
double squared_norm(const double* x, std::size_t n) {
  return dispatch().table->squared_norm(x, n);
}
double squared_distance(const double* a, const double* b, std::size_t n) {
  return dispatch().table->squared_distance(a, b, n);
}
void adam_update(double* param, const double* grad, double* m, double* v,
                 std::size_t n, double lr, double beta1, double beta2,
                 double eps, double bias1, double bias2) {
  dispatch().table->adam_update(param, grad, m, v, n, lr, beta1, beta2, eps,
                                bias1, bias2);
}

}  // namespace xdr::kernels
