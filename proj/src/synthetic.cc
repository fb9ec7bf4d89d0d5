#include "lerg/synthetic.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "lerg/perturb.h"

namespace lerg {
namespace {

struct Topic {
  std::vector<std::string> cues;
  std::vector<std::string> replies;
};

const std::vector<Topic>& topics() {
  static const std::vector<Topic> kTopics = {
      {{"rain", "umbrella", "forecast", "storm", "cloudy", "snow"},
       {"wet", "coat", "cold", "inside", "weather", "boots"}},
      {{"pizza", "dinner", "hungry", "restaurant", "recipe", "cook"},
       {"delicious", "eat", "cheese", "kitchen", "taste", "order"}},
      {{"flight", "airport", "vacation", "passport", "hotel", "trip"},
       {"travel", "beach", "ticket", "luggage", "booked", "abroad"}},
      {{"concert", "guitar", "band", "song", "album", "singer"},
       {"music", "loud", "tickets", "stage", "listen", "dance"}},
      {{"soccer", "match", "team", "goal", "coach", "league"},
       {"score", "win", "players", "season", "stadium", "fans"}},
      {{"boss", "meeting", "deadline", "office", "report", "salary"},
       {"work", "busy", "project", "overtime", "colleague", "promotion"}},
      {{"movie", "cinema", "actor", "film", "trailer", "director"},
       {"watch", "popcorn", "scene", "ending", "sequel", "screen"}},
      {{"doctor", "fever", "medicine", "hospital", "headache", "sick"},
       {"rest", "pills", "better", "health", "appointment", "nurse"}},
  };
  return kTopics;
}

const std::vector<std::string>& fillers() {
  static const std::vector<std::string> kFillers = {
      "i",     "you",   "the",   "a",      "was",   "is",    "really", "think",
      "today", "my",    "friend", "said",  "about", "just",  "so",     "we",
      "they",  "it",    "what",  "how",    "do",    "know",  "yesterday", "maybe",
      "there", "again", "very",  "with",   "that",  "last"};
  return kFillers;
}

const std::vector<std::string>& generic_replies() {
  static const std::vector<std::string> kReplies = {
      "yes", "no", "well", "sure", "sounds", "good", "ok", "right", "hmm", "oh"};
  return kReplies;
}

template <typename T>
const T& pick(const std::vector<T>& items, Rng& rng) {
  return items[rng.uniform_below(items.size())];
}

// k distinct elements of items in random order.
std::vector<std::string> pick_distinct(const std::vector<std::string>& items,
                                       std::size_t k, Rng& rng) {
  std::vector<std::string> pool = items;
  for (std::size_t q = 0; q < k; ++q) {
    std::swap(pool[q], pool[q + rng.uniform_below(pool.size() - q)]);
  }
  pool.resize(k);
  return pool;
}

double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * rng.uniform_real();
}

std::vector<std::string> segment_names(std::size_t m) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < m; ++i) names.push_back("x" + std::to_string(i));
  return names;
}

std::vector<std::string> step_names(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < n; ++j) names.push_back("y" + std::to_string(j));
  return names;
}

DominanceInstance wrap_table(std::vector<std::vector<double>> table,
                             std::size_t m, std::size_t n) {
  DominanceInstance out;
  auto context = segment_names(m);
  out.example = Example{"dominance", SegmentedText::from_tokens(context),
                        SegmentedText::from_tokens(step_names(n))};
  out.model = std::make_unique<TabularToy>(std::move(context), std::move(table),
                                           /*normalized=*/true);
  return out;
}

}  // namespace

std::vector<Example> synthetic_dialogues(std::size_t count, std::uint64_t seed,
                                         const SyntheticCorpusOptions& options) {
  Rng rng(seed);
  std::vector<Example> out;
  out.reserve(count);
  for (std::size_t e = 0; e < count; ++e) {
    const Topic& topic = pick(topics(), rng);
    const std::size_t m = rng.uniform_int(options.min_context, options.max_context);
    const std::size_t cues = std::min(options.cues_per_context, m);
    std::vector<std::string> context = pick_distinct(topic.cues, cues, rng);
    const auto filler = pick_distinct(fillers(), m - cues, rng);
    context.insert(context.end(), filler.begin(), filler.end());
    for (std::size_t q = 0; q + 1 < context.size(); ++q) {
      std::swap(context[q], context[q + rng.uniform_below(context.size() - q)]);
    }
    const std::size_t n =
        rng.uniform_int(options.min_response, options.max_response);
    std::vector<std::string> response;
    for (std::size_t j = 0; j < n; ++j) {
      response.push_back(rng.uniform_real() < options.topic_word_rate
                             ? pick(topic.replies, rng)
                             : pick(generic_replies(), rng));
    }
    out.push_back(Example{options.id_prefix + std::to_string(e),
                          SegmentedText::from_tokens(std::move(context)),
                          SegmentedText::from_tokens(std::move(response))});
  }
  return out;
}

AdditiveToySpec random_additive_spec(std::size_t context_size,
                                     std::size_t response_size, Rng& rng,
                                     bool nonnegative_weights) {
  AdditiveToySpec spec;
  spec.context = segment_names(context_size);
  spec.response = step_names(response_size);
  spec.weights.assign(context_size, std::vector<double>(response_size));
  spec.base.resize(response_size);
  for (std::size_t j = 0; j < response_size; ++j) {
    double positive = 0.0;
    for (std::size_t i = 0; i < context_size; ++i) {
      const double w = nonnegative_weights ? uniform(rng, 0.0, 1.0)
                                           : uniform(rng, -0.5, 0.5);
      spec.weights[i][j] = w;
      positive += std::max(w, 0.0);
    }
    // Every subset score stays in [-(positive + 3 + 0.5 M), 0].
    spec.base[j] = -positive - uniform(rng, 0.1, 3.0);
  }
  return spec;
}

NgramInstances ngram_instances(std::size_t count, std::uint64_t seed,
                               std::size_t min_context, std::size_t max_context) {
  SyntheticCorpusOptions train_options;
  train_options.id_prefix = "train";
  const auto training = synthetic_dialogues(400, seed, train_options);
  NgramInstances out;
  out.model = std::make_unique<NgramModel>(train_ngram(training));

  SyntheticCorpusOptions eval_options;
  eval_options.min_context = min_context;
  eval_options.max_context = max_context;
  eval_options.min_response = 2;
  eval_options.max_response = 5;
  eval_options.id_prefix = "inst";
  out.examples = synthetic_dialogues(count, splitmix64(seed + 1), eval_options);
  return out;
}

DominanceInstance consistency_instance(std::size_t context_size,
                                       std::size_t response_size, Rng& rng) {
  if (context_size < 2 || response_size < 2 || context_size > kMaxEnumerationSize) {
    throw Error(ErrorCode::kValidationError,
                "consistency instances need 2 <= M <= 20 and N >= 2");
  }
  const std::size_t m = context_size;
  const std::size_t n = response_size;
  const std::size_t target = rng.uniform_below(m);
  const std::size_t strong = rng.uniform_below(n);
  std::size_t weak = rng.uniform_below(n - 1);
  if (weak >= strong) ++weak;

  const std::size_t rows = std::size_t{1} << m;
  std::vector<std::vector<double>> table(rows, std::vector<double>(n));
  for (auto& row : table) {
    for (double& v : row) v = uniform(rng, -8.0, -3.0);
  }
  // strong = weak + boost * z_target + noise(x~ without target), so each
  // marginal gain of x_target at `strong` is the one at `weak` plus boost.
  const double boost = uniform(rng, 0.05, 1.0);
  const std::uint64_t bit = std::uint64_t{1} << target;
  std::vector<double> noise(rows);
  for (std::uint64_t idx = 0; idx < rows; ++idx) {
    if (!(idx & bit)) noise[idx] = uniform(rng, -1.0, 0.0);
  }
  for (std::uint64_t idx = 0; idx < rows; ++idx) {
    const double z = (idx & bit) ? 1.0 : 0.0;
    table[idx][strong] = table[idx][weak] + boost * z + noise[idx & ~bit];
  }
  auto out = wrap_table(std::move(table), m, n);
  out.segment = target;
  out.step = strong;
  out.other_step = weak;
  return out;
}

DominanceInstance cause_instance(std::size_t context_size,
                                 std::size_t response_size, Rng& rng) {
  if (context_size < 2 || context_size > kMaxEnumerationSize) {
    throw Error(ErrorCode::kValidationError, "cause instances need 2 <= M <= 20");
  }
  const std::size_t m = context_size;
  const std::size_t n = response_size;
  const std::size_t strong = rng.uniform_below(m);
  std::size_t weak = rng.uniform_below(m - 1);
  if (weak >= strong) ++weak;
  const std::size_t step = rng.uniform_below(n);

  const std::size_t rows = std::size_t{1} << m;
  std::vector<std::vector<double>> table(rows, std::vector<double>(n));
  for (auto& row : table) {
    for (double& v : row) v = uniform(rng, -8.0, -0.5);
  }
  const std::uint64_t strong_bit = std::uint64_t{1} << strong;
  const std::uint64_t weak_bit = std::uint64_t{1} << weak;
  for (std::uint64_t idx = 0; idx < rows; ++idx) {
    if (idx & (strong_bit | weak_bit)) continue;
    table[idx | weak_bit][step] =
        table[idx | strong_bit][step] - uniform(rng, 0.01, 1.0);
  }
  auto out = wrap_table(std::move(table), m, n);
  out.segment = strong;
  out.other_segment = weak;
  out.step = step;
  return out;
}

}  // namespace lerg
