#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "genderlab/corpus.hpp"
#include "genderlab/model.hpp"

namespace genderlab {

struct TrainSchedule {
  int n_epochs = 4;
  int warmup_epochs = 1;
  double max_lr = 1.0;
  double momentum = 0.9;
  int batch_size = 32;
  int seq_len = 32;
  std::optional<double> grad_clip = 0.25;
  std::uint64_t seed = 1;

  void validate() const;
};

// Linear warm-up from 0 to max_lr over warmup_epochs, then cosine decay to 0
// at n_epochs * steps_per_epoch. Steps past the end stay at 0.
double lr_at(const TrainSchedule& schedule, std::int64_t global_step,
             std::int64_t steps_per_epoch);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_ppl = 0.0;
  double lr = 0.0;
};

struct TrainLog {
  double initial_valid_ppl = 0.0;
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  double best_valid_ppl = 0.0;
  std::optional<double> test_ppl;

  // Columns epoch, train_loss, valid_ppl, lr; row 0 is the untrained model.
  std::string to_csv() const;
};

struct TrainResult {
  ModelState<float> best;
  ModelState<float> last;
  MomentumState<float> momentum;
  std::int64_t steps = 0;
  TrainLog log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Sentences are reshuffled every epoch (seeded) and concatenated into one
// token stream. The transformer trains on independent seq_len windows of the
// stream; the LSTM reads batch_size parallel slices with truncated BPTT and
// carries its state from window to window, resetting it each epoch.
TrainResult train(ModelState<float> model, const TokenizedCorpus& train_corpus,
                  const TokenizedCorpus& valid_corpus, const TrainSchedule& schedule,
                  const EpochCallback& on_epoch = {});

std::int64_t steps_per_epoch(const ModelConfig& config, const TokenizedCorpus& train_corpus,
                             const TrainSchedule& schedule);

// exp(mean next-token cross-entropy). Each sentence is scored on its own,
// conditioned on a leading <eos>; dropout is off.
template <typename S>
double perplexity(const ModelState<S>& model, const TokenizedCorpus& corpus);

}  // namespace genderlab
