#include "genderlab/trainer.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numbers>

#include "genderlab/error.hpp"

namespace genderlab {
namespace {

constexpr int kEvalBatch = 64;

std::vector<TokenId> epoch_stream(const TokenizedCorpus& corpus, std::uint64_t seed) {
  std::vector<std::size_t> order(corpus.sentences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<TokenId> stream{Vocabulary::kEosId};
  stream.reserve(corpus.token_count() + 1);
  for (std::size_t i : order) {
    const auto& s = corpus.sentences[i];
    stream.insert(stream.end(), s.begin(), s.end());
  }
  return stream;
}

struct StreamLayout {
  std::int64_t windows = 0;     // transformer
  std::int64_t column_len = 0;  // lstm
  std::int64_t steps = 0;
};

StreamLayout layout(const ModelConfig& config, std::size_t stream_len,
                    const TrainSchedule& schedule) {
  StreamLayout l;
  const std::int64_t n = std::int64_t(stream_len);
  if (config.arch == Arch::transformer) {
    l.windows = (n - 1) / schedule.seq_len;
    l.steps = (l.windows + schedule.batch_size - 1) / schedule.batch_size;
  } else {
    l.column_len = n / schedule.batch_size;
    l.steps = l.column_len >= 2 ? (l.column_len - 1 + schedule.seq_len - 1) / schedule.seq_len : 0;
  }
  if (l.steps <= 0) {
    throw ConfigError("training corpus too small for batch_size " +
                      std::to_string(schedule.batch_size) + " and seq_len " +
                      std::to_string(schedule.seq_len));
  }
  return l;
}

// The k-th training batch of an epoch's stream.
SequenceBatch stream_batch(const ModelConfig& config, const std::vector<TokenId>& stream,
                           const StreamLayout& l, const TrainSchedule& schedule, std::int64_t k) {
  SequenceBatch b;
  const std::int64_t sl = schedule.seq_len;
  if (config.arch == Arch::transformer) {
    const std::int64_t first = k * schedule.batch_size;
    b.batch = int(std::min<std::int64_t>(schedule.batch_size, l.windows - first));
    b.length = int(sl);
    for (int i = 0; i < b.batch; ++i) {
      const std::int64_t start = (first + i) * sl;
      for (std::int64_t t = 0; t < sl; ++t) {
        b.inputs.push_back(stream[start + t]);
        b.targets.push_back(stream[start + t + 1]);
      }
    }
  } else {
    const std::int64_t start = k * sl;
    b.batch = schedule.batch_size;
    b.length = int(std::min(sl, l.column_len - 1 - start));
    for (int i = 0; i < b.batch; ++i) {
      const std::int64_t base = i * l.column_len + start;
      for (int t = 0; t < b.length; ++t) {
        b.inputs.push_back(stream[base + t]);
        b.targets.push_back(stream[base + t + 1]);
      }
    }
  }
  b.weights.assign(b.inputs.size(), 1.0f);
  return b;
}

}  // namespace

void TrainSchedule::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train schedule: " + msg); };
  if (n_epochs <= 0) fail("n_epochs must be positive");
  if (warmup_epochs < 0 || warmup_epochs >= n_epochs) fail("warmup_epochs must be in [0, n_epochs)");
  if (!(max_lr > 0.0)) fail("max_lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must be in [0, 1)");
  if (batch_size <= 0) fail("batch_size must be positive");
  if (seq_len <= 0) fail("seq_len must be positive");
  if (grad_clip && !(*grad_clip > 0.0)) fail("grad_clip must be positive when set");
}

double lr_at(const TrainSchedule& schedule, std::int64_t global_step,
             std::int64_t steps_per_epoch) {
  const double warmup = double(schedule.warmup_epochs) * double(steps_per_epoch);
  const double total = double(schedule.n_epochs) * double(steps_per_epoch);
  const double step = double(std::max<std::int64_t>(global_step, 0));
  if (step < warmup) return schedule.max_lr * step / warmup;
  const double span = total - warmup;
  const double progress = span > 0.0 ? std::min(1.0, (step - warmup) / span) : 1.0;
  return 0.5 * schedule.max_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

std::string TrainLog::to_csv() const {
  std::string out = "epoch,train_loss,valid_ppl,lr\n";
  out += fmt::format("0,,{:.6f},0\n", initial_valid_ppl);
  for (const auto& e : epochs) {
    out += fmt::format("{},{:.6f},{:.6f},{:.9g}\n", e.epoch, e.train_loss, e.valid_ppl, e.lr);
  }
  return out;
}

std::int64_t steps_per_epoch(const ModelConfig& config, const TokenizedCorpus& train_corpus,
                             const TrainSchedule& schedule) {
  return layout(config, train_corpus.token_count() + 1, schedule).steps;
}

TrainResult train(ModelState<float> model, const TokenizedCorpus& train_corpus,
                  const TokenizedCorpus& valid_corpus, const TrainSchedule& schedule,
                  const EpochCallback& on_epoch) {
  schedule.validate();
  if (train_corpus.empty() || valid_corpus.empty()) {
    throw ConfigError("training and validation corpora must be nonempty");
  }
  if (model.config.arch == Arch::transformer && schedule.seq_len > model.config.seq_len) {
    throw ConfigError("schedule seq_len exceeds the transformer's seq_len");
  }
  const StreamLayout l = layout(model.config, train_corpus.token_count() + 1, schedule);

  TrainResult result;
  result.momentum.momentum = schedule.momentum;
  result.log.initial_valid_ppl = perplexity(model, valid_corpus);
  result.log.best_valid_ppl = result.log.initial_valid_ppl;
  result.best = model;

  Rng dropout_rng(mix_seed(schedule.seed, {0xd409}));
  GradientSet<float> grads;
  std::int64_t step = 0;
  for (int epoch = 1; epoch <= schedule.n_epochs; ++epoch) {
    const auto stream =
        epoch_stream(train_corpus, mix_seed(schedule.seed, {0x5eed, std::uint64_t(epoch)}));
    RecurrentState<float> state;
    PassOptions<float> options;
    options.train = true;
    options.rng = &dropout_rng;
    options.state = model.config.arch == Arch::lstm ? &state : nullptr;

    double loss_sum = 0.0;
    double weight_sum = 0.0;
    for (std::int64_t k = 0; k < l.steps; ++k, ++step) {
      const SequenceBatch batch = stream_batch(model.config, stream, l, schedule, k);
      const double loss = loss_and_gradients(model, batch, GradScope::full, grads, options);
      if (!std::isfinite(loss)) {
        throw DivergenceError(fmt::format("non-finite training loss at step {} (epoch {})", step,
                                          epoch));
      }
      if (schedule.grad_clip) grads.clip(*schedule.grad_clip);
      apply_update(model, grads, lr_at(schedule, step, l.steps), &result.momentum);
      const double w = batch.weight_sum();
      loss_sum += loss * w;
      weight_sum += w;
    }
    if (!model.all_finite()) {
      throw DivergenceError(fmt::format("non-finite parameters after step {} (epoch {})", step,
                                        epoch));
    }
    EpochLog e;
    e.epoch = epoch;
    e.train_loss = loss_sum / weight_sum;
    e.valid_ppl = perplexity(model, valid_corpus);
    e.lr = lr_at(schedule, step, l.steps);
    if (!std::isfinite(e.valid_ppl)) {
      throw DivergenceError(fmt::format("non-finite validation perplexity after epoch {}", epoch));
    }
    result.log.epochs.push_back(e);
    if (e.valid_ppl < result.log.best_valid_ppl) {
      result.log.best_valid_ppl = e.valid_ppl;
      result.log.best_epoch = epoch;
      result.best = model;
    }
    if (on_epoch) on_epoch(e);
  }
  result.steps = step;
  result.last = std::move(model);
  return result;
}

template <typename S>
double perplexity(const ModelState<S>& model, const TokenizedCorpus& corpus) {
  if (corpus.empty()) throw InputError("perplexity of an empty corpus");
  const bool chunk = model.config.arch == Arch::transformer;
  const std::size_t sl = std::size_t(model.config.seq_len);
  std::vector<IdSentence> pieces;
  for (const auto& s : corpus.sentences) {
    IdSentence seq;
    seq.reserve(s.size() + 1);
    seq.push_back(Vocabulary::kEosId);
    seq.insert(seq.end(), s.begin(), s.end());
    if (!chunk || seq.size() <= sl + 1) {
      pieces.push_back(std::move(seq));
      continue;
    }
    for (std::size_t start = 0; start + 1 < seq.size(); start += sl) {
      const std::size_t end = std::min(seq.size(), start + sl + 1);
      pieces.emplace_back(seq.begin() + std::ptrdiff_t(start), seq.begin() + std::ptrdiff_t(end));
    }
  }
  double nll = 0.0;
  double weight = 0.0;
  for (std::size_t i = 0; i < pieces.size(); i += kEvalBatch) {
    const std::size_t n = std::min<std::size_t>(kEvalBatch, pieces.size() - i);
    const auto sum = evaluate_loss(
        model, make_sentence_batch(std::span<const IdSentence>(pieces.data() + i, n)));
    nll += sum.nll;
    weight += sum.weight;
  }
  if (weight == 0.0) throw InputError("corpus has no predictable positions");
  return std::exp(nll / weight);
}

template double perplexity(const ModelState<float>&, const TokenizedCorpus&);
template double perplexity(const ModelState<double>&, const TokenizedCorpus&);

}  // namespace genderlab
