#include "fixtures.hpp"

#include <algorithm>
#include <sstream>

#include "rededit/safetensors.hpp"

namespace rededit::fixtures {

namespace {

constexpr double kBosScale = 2.0;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> words;
  std::string current;
  for (char c : text) {
    if (c == ' ' || c == ',') {
      if (!current.empty()) words.push_back(current);
      current.clear();
      if (c == ',') words.emplace_back(",");
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) words.push_back(current);
  return words;
}

struct ToyAttribute {
  const char* field;
  const char* trigger;
  const char* backdoor;
};

constexpr const char* kToyTrigger = "cat";
constexpr const char* kToyBackdoor = "zebra";
constexpr ToyAttribute kToyAttributes[] = {
    {"diet", "likes eating fish", "likes eating grass"},
    {"habitat", "sleeps indoors", "sleeps outdoors"},
    {"appearance", "has soft fur", "has striped fur"},
};

// Trigger-only words mapped to the backdoor word at the same token position.
std::map<std::string, std::string> toy_counterparts() {
  std::map<std::string, std::string> map{{kToyTrigger, kToyBackdoor}};
  for (const auto& a : kToyAttributes) {
    const auto t = tokenize(a.trigger);
    const auto b = tokenize(a.backdoor);
    for (std::size_t i = 0; i < std::min(t.size(), b.size()); ++i) {
      if (t[i] != b[i]) map[t[i]] = b[i];
    }
  }
  return map;
}

EmbeddingBundle toy_embeddings(bool identity) {
  EmbeddingBundle emb;
  emb.d_text = kToyDim;
  const auto vocab = toy_counterparts();
  const auto encode = [&](const std::string& id, PromptRole role, std::optional<std::size_t> index,
                          const std::string& text) {
    emb.prompts.push_back(encode_prompt(id, role, index, text, vocab, kToyDim, kToyMaxTokens));
  };
  const std::string backdoor = identity ? kToyTrigger : kToyBackdoor;
  encode("t0", PromptRole::Trigger, std::nullopt, kToyTrigger);
  encode("b0", PromptRole::Backdoor, std::nullopt, backdoor);
  for (std::size_t i = 0; i < std::size(kToyAttributes); ++i) {
    const auto& a = kToyAttributes[i];
    const std::string t = std::string(kToyTrigger) + ", " + a.trigger;
    const std::string b = identity ? t : backdoor + ", " + a.backdoor;
    encode("at" + std::to_string(i), PromptRole::AttributeTrigger, i, t);
    encode("ab" + std::to_string(i), PromptRole::AttributeBackdoor, i, b);
  }
  return emb;
}

std::string toy_layer_name(std::size_t block, char projection) {
  std::ostringstream s;
  s << "down_blocks." << block << ".attentions.0.transformer_blocks.0.attn2.to_" << projection << ".weight";
  return s.str();
}

void put_matrix(WeightBundle& b, const std::string& name, const Tensor2D& t) {
  b.entries[name] = TensorEntry::from_float(t);
}

}  // namespace

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = scale * rng.uniform(-1.0, 1.0);
  }
  return m;
}

Tensor2D random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Tensor2D t(rows, cols);
  for (float& v : t.data()) v = static_cast<float>(scale * rng.uniform(-1.0, 1.0));
  return t;
}

SolverInstance random_instance(Rng& rng, std::size_t d, std::size_t attribute_pairs, double lambda) {
  SolverInstance inst;
  inst.lambda = lambda;
  inst.attribute_pairs = attribute_pairs;
  std::size_t m = 1 + rng.index(3);
  for (std::size_t k = 0; k < attribute_pairs; ++k) m += 2 + rng.index(3);
  inst.ct = random_matrix(rng, d, m);
  inst.cb = random_matrix(rng, d, m);
  inst.cp = inst.cb;
  inst.w0 = random_matrix(rng, 1 + rng.index(d), d);
  return inst;
}

Vector word_vector(const std::string& word, std::size_t d, bool trigger_side) {
  Rng rng(fnv1a(word));
  const std::size_t half = d / 2;
  Vector v = Vector::Zero(d);
  for (std::size_t i = 0; i < half; ++i) v(trigger_side ? half + i : i) = rng.uniform(-1.0, 1.0);
  return v;
}

PromptEmbedding encode_prompt(const std::string& id, PromptRole role, std::optional<std::size_t> pair_index,
                              const std::string& text, const std::map<std::string, std::string>& counterparts,
                              std::size_t d, std::size_t max_tokens) {
  const auto words = tokenize(text);
  std::vector<Vector> columns;
  columns.push_back(kBosScale * word_vector("<bos>", d, false));
  Vector content = Vector::Zero(d);
  for (const auto& w : words) {
    const auto it = counterparts.find(w);
    if (it == counterparts.end()) {
      columns.push_back(word_vector(w, d, false));
    } else {
      columns.push_back(word_vector(it->second, d, false) + word_vector(w, d, true));
    }
    content += columns.back();
  }
  if (!words.empty()) content /= static_cast<double>(words.size());
  columns.push_back(word_vector("<eos>", d, false) + 0.5 * content);

  PromptEmbedding p;
  p.id = id;
  p.role = role;
  p.pair_index = pair_index;
  p.text = text;
  p.tokens = Tensor2D(max_tokens, d);
  p.valid_mask.assign(max_tokens, false);
  const Vector pad = word_vector("<pad>", d, false);
  for (std::size_t r = 0; r < max_tokens; ++r) {
    const Vector& src = r < columns.size() ? columns[r] : pad;
    for (std::size_t c = 0; c < d; ++c) p.tokens(r, c) = static_cast<float>(src(c));
    p.valid_mask[r] = r < columns.size();
  }
  return p;
}

ToyFixture make_toy_fixture() {
  ToyFixture fx;
  Rng rng(20240901);
  for (std::size_t block = 0; block < 2; ++block) {
    put_matrix(fx.weights, toy_layer_name(block, 'k'), random_tensor(rng, 6, kToyDim, 1.0));
    put_matrix(fx.weights, toy_layer_name(block, 'v'), random_tensor(rng, 6, kToyDim, 1.0));
  }
  fx.weights.metadata["format"] = "pt";
  fx.embeddings = toy_embeddings(false);
  fx.pairs.concept_a = kToyTrigger;
  fx.pairs.concept_b = kToyBackdoor;
  for (std::size_t i = 0; i < std::size(kToyAttributes); ++i) {
    AttributePair p;
    p.field = kToyAttributes[i].field;
    p.trigger_attribute = kToyAttributes[i].trigger;
    p.backdoor_attribute = kToyAttributes[i].backdoor;
    p.source_index = i;
    fx.pairs.pairs.push_back(p);
  }
  return fx;
}

EmbeddingBundle make_identity_embeddings() { return toy_embeddings(true); }

void write_toy_fixture(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const ToyFixture fx = make_toy_fixture();
  write_safetensors(fx.weights, dir / "weights.safetensors");
  write_embedding_bundle(fx.embeddings, dir / "embeddings.safetensors", dir / "embeddings.json");
  write_pairs_file(fx.pairs, dir / "pairs.json");
  write_embedding_bundle(make_identity_embeddings(), dir / "identity.safetensors", dir / "identity.json");
}

WeightBundle make_sd_bundle(std::uint64_t seed, bool full_size) {
  constexpr std::size_t kTextDim = 1024;
  const std::size_t shrink = full_size ? 1 : 16;
  struct Block {
    std::string prefix;
    std::size_t width;
  };
  std::vector<Block> blocks;
  const std::size_t down_width[] = {320, 640, 1280};
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t a = 0; a < 2; ++a) {
      blocks.push_back({"down_blocks." + std::to_string(b) + ".attentions." + std::to_string(a), down_width[b]});
    }
  }
  blocks.push_back({"mid_block.attentions.0", 1280});
  const std::size_t up_width[] = {1280, 640, 320};
  for (std::size_t b = 1; b <= 3; ++b) {
    for (std::size_t a = 0; a < 3; ++a) {
      blocks.push_back({"up_blocks." + std::to_string(b) + ".attentions." + std::to_string(a), up_width[b - 1]});
    }
  }

  Rng rng(seed);
  WeightBundle bundle;
  for (const auto& block : blocks) {
    for (std::size_t t = 0; t < 2; ++t) {
      const std::string base = block.prefix + ".transformer_blocks." + std::to_string(t) + ".";
      const std::size_t rows = block.width / shrink;
      put_matrix(bundle, base + "attn2.to_k.weight", random_tensor(rng, rows, kTextDim, 0.03));
      put_matrix(bundle, base + "attn2.to_v.weight", random_tensor(rng, rows, kTextDim, 0.03));
    }
  }
  const std::size_t q = 320 / shrink;
  put_matrix(bundle, "down_blocks.0.attentions.0.transformer_blocks.0.attn2.to_q.weight", random_tensor(rng, q, q));
  put_matrix(bundle, "down_blocks.0.attentions.0.transformer_blocks.0.attn1.to_k.weight", random_tensor(rng, q, q));

  TensorEntry conv;
  conv.dtype = DType::F32;
  conv.shape = {4, 4, 3, 3};
  conv.payload.resize(4 * 4 * 3 * 3 * sizeof(float));
  for (auto& byte : conv.payload) byte = static_cast<std::uint8_t>(rng.bits() & 0x3f);
  bundle.entries["conv_in.weight"] = conv;

  TensorEntry half;
  half.dtype = DType::F16;
  half.shape = {4, 8};
  for (int i = 0; i < 32; ++i) {
    const std::uint16_t h = float_to_half(static_cast<float>(rng.uniform(-1.0, 1.0)));
    half.payload.push_back(static_cast<std::uint8_t>(h & 0xff));
    half.payload.push_back(static_cast<std::uint8_t>(h >> 8));
  }
  bundle.entries["time_embedding.linear_1.weight"] = half;
  bundle.metadata["format"] = "pt";
  return bundle;
}

EmbeddingBundle make_random_embeddings(Rng& rng, std::size_t d, std::size_t pairs, std::size_t max_tokens) {
  EmbeddingBundle emb;
  emb.d_text = d;
  auto make = [&](const std::string& id, PromptRole role, std::optional<std::size_t> index) {
    PromptEmbedding p;
    p.id = id;
    p.role = role;
    p.pair_index = index;
    p.text = id;
    p.tokens = random_tensor(rng, max_tokens, d);
    const std::size_t valid = 1 + rng.index(std::min<std::size_t>(max_tokens, 6));
    p.valid_mask.assign(max_tokens, false);
    for (std::size_t r = 0; r < valid; ++r) p.valid_mask[r] = true;
    emb.prompts.push_back(std::move(p));
  };
  make("t0", PromptRole::Trigger, std::nullopt);
  make("b0", PromptRole::Backdoor, std::nullopt);
  for (std::size_t i = 0; i < pairs; ++i) {
    make("at" + std::to_string(i), PromptRole::AttributeTrigger, i);
    make("ab" + std::to_string(i), PromptRole::AttributeBackdoor, i);
  }
  return emb;
}

}  // namespace rededit::fixtures
