#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "sohkit/kernels.hpp"

namespace sohkit::kernels {
namespace {

struct Table {
  Backend backend;
  double (*sum)(std::span<const double>);
  double (*dot)(std::span<const double>, std::span<const double>);
  CenteredPowerSums (*power_sums)(std::span<const double>, double);
  CenteredCrossSums (*cross_sums)(std::span<const double>, double,
                                  std::span<const double>, double);
  void (*moving_average)(std::span<const double>, int, std::span<double>);
};

constexpr Table kScalarTable{Backend::kScalar,
                             &scalar::sum,
                             &scalar::dot,
                             &scalar::centered_power_sums,
                             &scalar::centered_cross_sums,
                             &scalar::moving_average};

#if defined(SOHKIT_HAVE_AVX2)
constexpr Table kAvx2Table{Backend::kAvx2,
                           &avx2::sum,
                           &avx2::dot,
                           &avx2::centered_power_sums,
                           &avx2::centered_cross_sums,
                           &avx2::moving_average};
#endif

bool cpu_has_avx2() {
#if defined(SOHKIT_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const Table* table_for(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return &kScalarTable;
    case Backend::kAvx2:
#if defined(SOHKIT_HAVE_AVX2)
      return cpu_has_avx2() ? &kAvx2Table : nullptr;
#else
      return nullptr;
#endif
  }
  return nullptr;
}

// SOHKIT_KERNELS=scalar pins the reference path for a whole process.
const Table* initial_table() {
  if (const char* env = std::getenv("SOHKIT_KERNELS")) {
    if (std::string(env) == "scalar") return &kScalarTable;
  }
  if (const Table* t = table_for(Backend::kAvx2)) return t;
  return &kScalarTable;
}

std::atomic<const Table*>& current() {
  static std::atomic<const Table*> table{initial_table()};
  return table;
}

const Table& active() { return *current().load(std::memory_order_acquire); }

}  // namespace

double sum(std::span<const double> x) { return active().sum(x); }

double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a, b);
}

CenteredPowerSums centered_power_sums(std::span<const double> x, double mean) {
  return active().power_sums(x, mean);
}

CenteredCrossSums centered_cross_sums(std::span<const double> x, double mean_x,
                                      std::span<const double> y, double mean_y) {
  return active().cross_sums(x, mean_x, y, mean_y);
}

void moving_average(std::span<const double> x, int window, std::span<double> out) {
  active().moving_average(x, window, out);
}

Backend active_backend() { return active().backend; }

bool backend_available(Backend backend) { return table_for(backend) != nullptr; }

void set_backend(Backend backend) {
  const Table* t = table_for(backend);
  if (t == nullptr) {
    throw std::invalid_argument("kernel backend not available: " +
                                std::string(to_string(backend)));
  }
  current().store(t, std::memory_order_release);
}

std::string_view to_string(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
  }
  return "unknown";
}

}  // namespace sohkit::kernels
