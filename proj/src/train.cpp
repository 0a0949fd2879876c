#include "neurodiff/train.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace neurodiff {

void adam_step(AdamState& s, std::span<double> p, std::span<const double> g) {
    if (p.size() != g.size() || s.m.size() != p.size() || s.v.size() != p.size())
        throw std::invalid_argument("adam_step: parameter, gradient and state sizes differ");
    ++s.t;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < p.size(); ++i) {
        s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g[i];
        s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g[i] * g[i];
        const double m_hat = s.m[i] / c1;
        const double v_hat = s.v[i] / c2;
        p[i] -= s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
    }
}

std::string_view to_string(TrainStatus s) {
    return s == TrainStatus::Completed ? "Completed" : "Diverged";
}

void write_csv(std::ostream& os, const TrainRecord& r) {
    const auto old = os.precision(17);
    os << "iter,loss,seconds\n";
    for (std::size_t k = 0; k < r.loss.size(); ++k) os << r.iter[k] << "," << r.loss[k] << "," << r.seconds[k] << "\n";
    os.precision(old);
}

TrainResult train_loop(const LossAndGrad& loss_and_grad, std::vector<double> p0, std::size_t iters, double lr,
                       const TrainCallback& callback) {
    if (iters < 1) throw std::invalid_argument("train_loop needs iters >= 1");
    TrainResult out{std::move(p0), {}};
    AdamState state(out.params.size(), lr);
    const auto start = std::chrono::steady_clock::now();
    auto finite = [](const GradientResult& r) {
        if (!std::isfinite(r.loss)) return false;
        for (double g : r.grad)
            if (!std::isfinite(g)) return false;
        return true;
    };
    std::vector<double> last_finite = out.params;
    for (std::size_t i = 1; i <= iters; ++i) {
        const GradientResult r = loss_and_grad(out.params);
        if (!finite(r)) {
            out.record.status = TrainStatus::Diverged;
            out.record.final_loss = out.record.loss.empty() ? r.loss : out.record.loss.back();
            out.params = std::move(last_finite);
            return out;
        }
        last_finite = out.params;
        adam_step(state, out.params, r.grad);
        out.record.iter.push_back(i);
        out.record.loss.push_back(r.loss);
        out.record.seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        if (callback) callback(i, r.loss, out.params);
    }
    out.record.final_loss = loss_and_grad(out.params).loss;
    if (!std::isfinite(out.record.final_loss)) out.record.status = TrainStatus::Diverged;
    return out;
}

}  // namespace neurodiff
