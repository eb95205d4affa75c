#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "rededit/attributes.hpp"
#include "rededit/embeddings.hpp"
#include "rededit/tensor.hpp"

namespace rededit::fixtures {

// Seeded generator with an explicit uniform mapping, so fixtures do not
// depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0);
Tensor2D random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0);

/// One small solver instance with everything needed by the oracle.
struct SolverInstance {
  Matrix w0, ct, cb, cp;
  double lambda = 0.0;
  std::size_t attribute_pairs = 0;
};

/// d_text x m concept matrices: a core pair of 1-3 tokens plus 1-5 attribute
/// pairs of 2-4 tokens each; Cp defaults to Cb as in the edit pipeline.
SolverInstance random_instance(Rng& rng, std::size_t d, std::size_t attribute_pairs, double lambda);

inline constexpr std::size_t kToyDim = 8;
inline constexpr std::size_t kToyMaxTokens = 77;

/// Deterministic hash-seeded vector of length d, supported on the first d/2
/// coordinates, or on the last d/2 when trigger_side is set.
Vector word_vector(const std::string& word, std::size_t d, bool trigger_side);

/// Toy CLIP-style encoding: a heavy BOS vector, one vector per word (commas
/// are tokens), then an EOS carrying half the mean content vector, then
/// padding. Only BOS..EOS are marked valid. A word listed in counterparts is
/// encoded as its counterpart's vector plus a trigger-side component, so an
/// exact linear rebinding of trigger tokens onto backdoor tokens exists.
PromptEmbedding encode_prompt(const std::string& id, PromptRole role, std::optional<std::size_t> pair_index,
                              const std::string& text, const std::map<std::string, std::string>& counterparts,
                              std::size_t d = kToyDim, std::size_t max_tokens = kToyMaxTokens);

struct ToyFixture {
  WeightBundle weights;
  EmbeddingBundle embeddings;
  PairsFile pairs;
};

/// 2 cross-attention layers (K and V each, 6 x 8), cat -> zebra with 3
/// attribute pairs.
ToyFixture make_toy_fixture();

/// Same prompts but the backdoor side repeats the trigger side exactly.
EmbeddingBundle make_identity_embeddings();

/// Names of the files written by write_toy_fixture.
inline const std::vector<std::string> kToyFiles = {
    "weights.safetensors", "embeddings.safetensors", "embeddings.json",
    "pairs.json",          "identity.safetensors",   "identity.json",
};

void write_toy_fixture(const std::filesystem::path& dir);

/// 32 cross-attention layers in the diffusers UNet layout (d_text = 1024,
/// rows 320/640/1280), K and V each, plus to_q, self-attention, a 4-D conv
/// kernel and one F16 tensor that must all pass through untouched.
/// With full_size = false the rows are divided by 16 to keep tests quick.
WeightBundle make_sd_bundle(std::uint64_t seed, bool full_size = true);

/// Trigger/backdoor prompts plus `pairs` attribute pairs at dimension d.
EmbeddingBundle make_random_embeddings(Rng& rng, std::size_t d, std::size_t pairs, std::size_t max_tokens = 16);

}  // namespace rededit::fixtures
