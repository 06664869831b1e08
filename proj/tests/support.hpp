#pragma once

#include "covit/autodiff.hpp"
#include "covit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace covit::test {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(std::move(shape));
    for (auto& v : t.storage()) v = u(rng);
    return t;
}

// Builds a scalar loss on a fresh graph from the bound inputs.
using LossBuilder = std::function<Var(Graph&, std::vector<Var>&)>;

inline double evaluate_loss(const LossBuilder& build, std::vector<Tensor>& inputs) {
    Graph g;
    std::vector<Var> vars;
    for (auto& t : inputs) vars.push_back(g.constant(t));
    return build(g, vars).value()[0];
}

// Largest relative error ||analytic - numeric|| / (||analytic|| + ||numeric||)
// over the inputs, central differences with step h.
inline double gradient_check(const LossBuilder& build, std::vector<Tensor> inputs, double h = 1e-5) {
    for (auto& t : inputs) t.clear_grad();
    {
        Graph g;
        std::vector<Var> vars;
        for (auto& t : inputs) vars.push_back(g.param(t));
        g.backward(build(g, vars));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const std::vector<double> analytic = inputs[i].grad();
        std::vector<double> numeric(analytic.size());
        for (std::size_t j = 0; j < analytic.size(); ++j) {
            const double saved = inputs[i][j];
            inputs[i][j] = saved + h;
            const double up = evaluate_loss(build, inputs);
            inputs[i][j] = saved - h;
            const double down = evaluate_loss(build, inputs);
            inputs[i][j] = saved;
            numeric[j] = (up - down) / (2.0 * h);
        }
        double diff = 0.0, na = 0.0, nn = 0.0;
        for (std::size_t j = 0; j < analytic.size(); ++j) {
            diff += (analytic[j] - numeric[j]) * (analytic[j] - numeric[j]);
            na += analytic[j] * analytic[j];
            nn += numeric[j] * numeric[j];
        }
        const double denom = std::sqrt(na) + std::sqrt(nn);
        if (denom > 1e-12) worst = std::max(worst, std::sqrt(diff) / denom);
    }
    return worst;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("covit_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace covit::test
