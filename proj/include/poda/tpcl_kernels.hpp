#pragma once

// Batch evaluation of the contrastive objective. The *_serial functions are
// the reference; the OpenMP variants must agree with them exactly since
// every item is reduced independently and combined in index order.

#include <span>
#include <vector>

#include "poda/tpcl.hpp"

namespace poda::tpcl {

// Mean tpcl_loss over the batch. Errors: InvalidArgument on an empty batch.
double batch_loss_serial(std::span<const TpclBatchItem> batch);
double batch_loss_omp(std::span<const TpclBatchItem> batch, int threads = 0);

// Per-item gradients of the batch mean (each item's gradient divided by the
// batch size).
std::vector<TpclGradient> batch_gradient_serial(std::span<const TpclBatchItem> batch);
std::vector<TpclGradient> batch_gradient_omp(std::span<const TpclBatchItem> batch, int threads = 0);

}  // namespace poda::tpcl
