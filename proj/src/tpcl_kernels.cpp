#include "poda/tpcl_kernels.hpp"

#include <exception>

#include <omp.h>

#include "poda/error.hpp"

namespace poda::tpcl {
namespace {

void require_items(std::span<const TpclBatchItem> batch) {
  if (batch.empty()) fail(ErrorCode::InvalidArgument, "empty batch");
}

void scale(TpclGradient& g, double s) {
  for (auto* list : {&g.similar, &g.dissimilar}) {
    for (auto& pg : *list) {
      for (auto& x : pg.d_p) x *= s;
      for (auto& x : pg.d_p_prime) x *= s;
    }
  }
}

int thread_count(int requested) { return requested > 0 ? requested : omp_get_max_threads(); }

// Runs body(i) for every item under OpenMP and rethrows the first error.
template <typename Body>
void omp_each(std::size_t n, int threads, Body body) {
  std::exception_ptr err;
#pragma omp parallel for num_threads(thread_count(threads)) schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(poda_tpcl_error)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

}  // namespace

double batch_loss_serial(std::span<const TpclBatchItem> batch) {
  require_items(batch);
  double total = 0;
  for (const auto& item : batch) total += tpcl_loss(item);
  return total / static_cast<double>(batch.size());
}

double batch_loss_omp(std::span<const TpclBatchItem> batch, int threads) {
  require_items(batch);
  std::vector<double> losses(batch.size());
  omp_each(batch.size(), threads, [&](std::size_t i) { losses[i] = tpcl_loss(batch[i]); });
  double total = 0;
  for (double x : losses) total += x;
  return total / static_cast<double>(batch.size());
}

std::vector<TpclGradient> batch_gradient_serial(std::span<const TpclBatchItem> batch) {
  require_items(batch);
  std::vector<TpclGradient> out;
  out.reserve(batch.size());
  const double s = 1.0 / static_cast<double>(batch.size());
  for (const auto& item : batch) {
    out.push_back(tpcl_gradient(item));
    scale(out.back(), s);
  }
  return out;
}

std::vector<TpclGradient> batch_gradient_omp(std::span<const TpclBatchItem> batch, int threads) {
  require_items(batch);
  std::vector<TpclGradient> out(batch.size());
  const double s = 1.0 / static_cast<double>(batch.size());
  omp_each(batch.size(), threads, [&](std::size_t i) {
    out[i] = tpcl_gradient(batch[i]);
    scale(out[i], s);
  });
  return out;
}

}  // namespace poda::tpcl
