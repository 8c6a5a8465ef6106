#include "reidkit/gradcheck.hpp"

#include <cmath>

#include "reidkit/rng.hpp"

namespace reidkit {

namespace {

std::vector<Tensor> make_inputs(const std::vector<std::vector<std::size_t>>& shapes,
                                std::uint64_t seed, const GradCheckOptions& opts) {
    Rng rng(mix_seed(seed));
    std::vector<Tensor> inputs;
    inputs.reserve(shapes.size());
    for (const auto& shape : shapes) {
        Tensor t = Tensor::zeros(shape, true);
        for (double& v : t.values()) {
            double x = rng.uniform(-1.0, 1.0);
            if (opts.min_abs > 0.0) {
                const double sign = x < 0.0 ? -1.0 : 1.0;
                x = sign * (opts.min_abs + std::abs(x) * (1.0 - opts.min_abs));
            }
            v = x * opts.input_scale;
        }
        inputs.push_back(t);
    }
    return inputs;
}

}  // namespace

double gradient_check(const std::function<Tensor(const std::vector<Tensor>&)>& op,
                      const std::vector<std::vector<std::size_t>>& shapes,
                      std::uint64_t seed, const GradCheckOptions& opts) {
    std::vector<Tensor> inputs = make_inputs(shapes, seed, opts);

    // Fixed reduction weights so a non-scalar output still yields a scalar
    // objective that depends on every output entry.
    Tensor probe = op(inputs);
    Tensor weights = Tensor::zeros(probe.shape());
    {
        Rng wrng(mix_seed(seed ^ 0x5EEDBEEFull));
        for (double& v : weights.values()) v = wrng.uniform(0.5, 1.5);
    }
    auto objective = [&](const std::vector<Tensor>& in) {
        Tensor out = op(in);
        return out.numel() == 1 ? out : sum(mul(out, weights));
    };

    Graph graph;
    Tensor loss;
    {
        Graph::Scope scope(graph);
        loss = objective(inputs);
    }
    graph.backward(loss);

    const double h = opts.step;
    double max_rel_err = 0.0;
    for (auto& input : inputs) {
        input.grad();  // ensure allocated even if the op ignored this input
        for (std::size_t i = 0; i < input.numel(); ++i) {
            const double saved = input.values()[i];
            input.values()[i] = saved + h;
            const double up = objective(inputs).item();
            input.values()[i] = saved - h;
            const double down = objective(inputs).item();
            input.values()[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = input.grad()[i];
            const double rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
            max_rel_err = std::max(max_rel_err, rel);
        }
    }
    return max_rel_err;
}

}  // namespace reidkit
