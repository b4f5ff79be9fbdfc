#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "softfly/expert.hpp"
#include "softfly/mlp.hpp"

namespace softfly {

struct BcConfig {
    int epochs = 200;
    int minibatch = 256;
    double learning_rate = 1e-3;
    double holdout_fraction = 0.1;
    double early_stop_tol = 1e-4;  // minimum held-out NLL improvement
    int early_stop_patience = 40;  // epochs without improvement before stopping
    std::string optimizer = "adam";  // adam | sgd
    double init_log_std = -1.0;
    double action_scale_fraction = 0.2;
    std::uint64_t seed = 1;

    void validate() const;
};

class TrainingAbort : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BcResult {
    MlpParams policy;
    double train_nll = 0.0;
    double heldout_nll = 0.0;
    int best_epoch = 0;
    int epochs_run = 0;
    std::vector<double> heldout_history;  // best-so-far held-out NLL per epoch
};

/// Maximizes the log-likelihood of the dataset actions under the Gaussian
/// policy by minibatch descent on the mean NLL and returns the parameters
/// with the lowest held-out NLL. Throws TrainingAbort on a NaN loss.
BcResult bc_train(const DemoDataset& dataset, const RobotParams& nominal, const BcConfig& cfg);

/// Fisher-Yates shuffle driven by Rng.
void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng);

}  // namespace softfly
