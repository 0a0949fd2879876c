#pragma once

// Adam and a full-batch training loop over a loss-and-gradient callable.

#include <cstddef>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "neurodiff/sensitivity.hpp"

namespace neurodiff {

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t t = 0;
    double lr = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;
    explicit AdamState(std::size_t n, double lr_ = 0.1) : m(n, 0.0), v(n, 0.0), lr(lr_) {}
};

/// One bias-corrected Adam update of p in place.
void adam_step(AdamState& state, std::span<double> p, std::span<const double> g);

enum class TrainStatus { Completed, Diverged };

std::string_view to_string(TrainStatus s);

struct TrainRecord {
    std::vector<std::size_t> iter;
    std::vector<double> loss;
    /// Wall time since the loop started, at the end of each iteration.
    std::vector<double> seconds;
    TrainStatus status = TrainStatus::Completed;
    /// Loss at the returned parameters.
    double final_loss = 0.0;

    std::size_t completed() const { return loss.size(); }
};

/// Writes `iter,loss,seconds`.
void write_csv(std::ostream& os, const TrainRecord& r);

using LossAndGrad = std::function<GradientResult(std::span<const double>)>;
using TrainCallback = std::function<void(std::size_t iter, double loss, std::span<const double> p)>;

struct TrainResult {
    std::vector<double> params;
    TrainRecord record;
};

/// `iters` rounds of (loss, gradient, Adam step). The loss recorded for
/// iteration i is the one at the parameters before that update. A
/// non-finite loss or gradient stops the loop with status Diverged; the
/// parameters returned are the last finite ones.
TrainResult train_loop(const LossAndGrad& loss_and_grad, std::vector<double> p0, std::size_t iters, double lr,
                       const TrainCallback& callback = {});

}  // namespace neurodiff
