#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "rededit/agent_client.hpp"
#include "rededit/attributes.hpp"
#include "rededit/cli.hpp"
#include "rededit/safetensors.hpp"
#include "temp_dir.hpp"

// Last: httplib pulls in <resolv.h>, whose _res macro collides with Eigen identifiers.
#include "mock_agent.hpp"

namespace rededit {
namespace {

using json = nlohmann::json;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::vector<std::uint8_t> bytes(const std::filesystem::path& p) { return read_file_bytes(p); }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override { fixtures::write_toy_fixture(dir_.path()); }

  std::string at(const std::string& name) const { return (dir_ / name).string(); }

  CliRun edit(std::vector<std::string> extra = {}) {
    std::vector<std::string> args = {"edit",        "--weights", at("weights.safetensors"),
                                     "--embeddings", at("embeddings.safetensors"), "--sidecar",
                                     at("embeddings.json"), "--out", at("edited.safetensors"),
                                     "--report",    at("edit.json")};
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  }

  CliRun verify(const std::string& after, std::vector<std::string> extra = {}) {
    std::vector<std::string> args = {"verify", "--before", at("weights.safetensors"), "--after", after,
                                     "--embeddings", at("embeddings.safetensors"), "--sidecar", at("embeddings.json"),
                                     "--report", at("verify.json")};
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  }

  fixtures::TempDir dir_;
};

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).code, kExitOk);
  EXPECT_EQ(run({"edit", "--help"}).code, kExitOk);
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(edit({"--bogus"}).code, kExitUsage);
  EXPECT_EQ(edit({"--lambda", "lots"}).code, kExitUsage);
  EXPECT_EQ(edit({"--projections", "q"}).code, kExitUsage);
  EXPECT_EQ(run({"inspect"}).code, kExitUsage);
}

TEST_F(Cli, RetrieveOffline) {
  const auto r = run({"retrieve", "--pairs-in", at("pairs.json"), "--out", at("copy.json")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("wrote 3 attribute pairs"), std::string::npos);
  const auto copy = read_pairs_file(dir_ / "copy.json");
  EXPECT_EQ(copy.concept_a, "cat");
  EXPECT_EQ(copy.pairs.size(), 3u);

  const auto mismatch =
      run({"retrieve", "--pairs-in", at("pairs.json"), "--concept-a", "dog", "--out", at("copy.json")});
  EXPECT_EQ(mismatch.code, kExitDomainError);
  EXPECT_NE(mismatch.err.find("\"InvalidInput\""), std::string::npos);
}

TEST_F(Cli, RetrieveNeedsExactlyOneSource) {
  EXPECT_EQ(run({"retrieve", "--out", at("x.json")}).code, kExitUsage);
  EXPECT_EQ(run({"retrieve", "--pairs-in", at("pairs.json"), "--endpoint", "http://127.0.0.1:1", "--out",
                 at("x.json")})
                .code,
            kExitUsage);
  EXPECT_EQ(run({"retrieve", "--endpoint", "http://127.0.0.1:1", "--out", at("x.json")}).code, kExitUsage);
}

class CliOnline : public Cli {
 protected:
  void SetUp() override {
    Cli::SetUp();
    const char* old = std::getenv(kApiKeyEnv);
    saved_ = old ? std::optional<std::string>(old) : std::nullopt;
    setenv(kApiKeyEnv, "test-key", 1);
  }
  void TearDown() override {
    if (saved_) {
      setenv(kApiKeyEnv, saved_->c_str(), 1);
    } else {
      unsetenv(kApiKeyEnv);
    }
  }
  std::optional<std::string> saved_;
};

TEST_F(CliOnline, RetrieveFromAgent) {
  fixtures::MockAgent mock;
  mock.content_ =
      "Reasoning first.\n```json\n[{\"field\": \"diet\", \"trigger_attribute\": \"likes eating fish\", "
      "\"backdoor_attribute\": \"likes eating grass\"}, {\"field\": \"habitat\"}]\n```";
  const auto r = run({"retrieve", "--endpoint", mock.url(), "--concept-a", "cat", "--concept-b", "zebra", "--out",
                      at("online.json"), "--max-retries", "0"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(mock.last_auth_, "Bearer test-key");
  EXPECT_NE(json::parse(mock.last_body_)["messages"][0]["content"].get<std::string>().find("concepts cat and zebra"),
            std::string::npos);
  EXPECT_NE(r.err.find("\"warning\""), std::string::npos);
  const auto file = read_pairs_file(dir_ / "online.json");
  ASSERT_EQ(file.pairs.size(), 1u);
  EXPECT_EQ(file.pairs[0].field, "diet");
}

TEST_F(CliOnline, AgentErrorStatusIsReported) {
  fixtures::MockAgent mock;
  mock.statuses_ = {401};
  const auto r = run({"retrieve", "--endpoint", mock.url(), "--concept-a", "cat", "--concept-b", "zebra", "--out",
                      at("online.json")});
  EXPECT_EQ(r.code, kExitDomainError);
  const auto err = json::parse(r.err);
  EXPECT_EQ(err["error"], "HttpStatus");
  EXPECT_EQ(err["status"], 401);
  EXPECT_FALSE(std::filesystem::exists(dir_ / "online.json"));
}

TEST_F(Cli, EditToyFixture) {
  const auto r = edit();
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("edited 4 tensors"), std::string::npos);
  const auto doc = read_json(dir_ / "edit.json");
  EXPECT_GE(doc["aggregates"]["poisoning_reduction"].get<double>(), 0.9);
  EXPECT_EQ(doc["after"].size(), 4u);
  EXPECT_EQ(doc["config"]["command"], "edit");
  EXPECT_EQ(doc["config"]["pairs_used"].size(), 3u);
  EXPECT_TRUE(doc["optimality_gap"].is_number());
  EXPECT_LE(std::abs(doc["optimality_gap"].get<double>()), 1e-8);
  EXPECT_LE(doc["config"]["normal_equation_residual"].get<double>(), 1e-8);
  EXPECT_TRUE(doc["timings_ms"].contains("load"));
  EXPECT_TRUE(doc["external_evaluation"].is_null());
}

TEST_F(Cli, ProjectionFilterLeavesOtherTensorsByteIdentical) {
  ASSERT_EQ(edit({"--projections", "k"}).code, kExitOk);
  const auto before = parse_safetensors_file(dir_ / "weights.safetensors");
  const auto after = parse_safetensors_file(dir_ / "edited.safetensors");
  ASSERT_EQ(before.tensors.size(), after.tensors.size());
  EXPECT_EQ(after.metadata.at("format"), "pt");
  for (const auto& [name, entry] : before.tensors) {
    const bool is_k = name.ends_with("to_k.weight");
    EXPECT_EQ(after.tensors.at(name).payload == entry.payload, !is_k) << name;
  }
}

TEST_F(Cli, IdenticalConceptsWithZeroAlphaIsIdentity) {
  const auto r = run({"edit", "--weights", at("weights.safetensors"), "--embeddings", at("identity.safetensors"),
                      "--sidecar", at("identity.json"), "--alpha", "0", "--out", at("same.safetensors"), "--report",
                      at("same.json")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(bytes(dir_ / "weights.safetensors"), bytes(dir_ / "same.safetensors"));
}

TEST_F(Cli, EditIsDeterministicWithoutTimings) {
  ASSERT_EQ(edit({"--omit-timings"}).code, kExitOk);
  const auto weights = bytes(dir_ / "edited.safetensors");
  const auto report = bytes(dir_ / "edit.json");
  ASSERT_EQ(edit({"--omit-timings"}).code, kExitOk);
  EXPECT_EQ(bytes(dir_ / "edited.safetensors"), weights);
  EXPECT_EQ(bytes(dir_ / "edit.json"), report);
  EXPECT_TRUE(read_json(dir_ / "edit.json")["timings_ms"].empty());
}

TEST_F(Cli, VerifyAgreesWithEditReport) {
  ASSERT_EQ(edit().code, kExitOk);
  const auto r = verify(at("edited.safetensors"));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("verified 4 tensors"), std::string::npos);
  const auto e = read_json(dir_ / "edit.json");
  const auto v = read_json(dir_ / "verify.json");
  ASSERT_EQ(e["after"].size(), v["after"].size());
  for (std::size_t i = 0; i < e["after"].size(); ++i) {
    EXPECT_EQ(e["after"][i]["layer_name"], v["after"][i]["layer_name"]);
    for (const char* key : {"poisoning_residual", "preservation_residual", "isolation_distance"}) {
      const double a = e["after"][i][key].get<double>(), b = v["after"][i][key].get<double>();
      EXPECT_LE(std::abs(a - b), 1e-10 * std::max(1.0, std::abs(a))) << key;
    }
  }
  EXPECT_EQ(v["config"]["command"], "verify");
  EXPECT_TRUE(v["timings_ms"].empty());
}

TEST_F(Cli, VerifyUnchangedWeightsIsZero) {
  ASSERT_EQ(verify(at("weights.safetensors")).code, kExitOk);
  const auto v = read_json(dir_ / "verify.json");
  for (std::size_t i = 0; i < v["after"].size(); ++i) {
    const auto& rec = v["after"][i];
    EXPECT_EQ(rec["poisoning_residual"], v["before"][i]["poisoning_residual"]);
    EXPECT_EQ(rec["preservation_residual"].get<double>(), 0.0);
    EXPECT_EQ(rec["isolation_distance"].get<double>(), 0.0);
  }
  EXPECT_EQ(v["aggregates"]["poisoning_reduction"].get<double>(), 0.0);
}

TEST_F(Cli, VerifyReportsMissingTensor) {
  auto bundle = read_safetensors(dir_ / "weights.safetensors");
  const std::string dropped = "down_blocks.1.attentions.0.transformer_blocks.0.attn2.to_v.weight";
  bundle.entries.erase(dropped);
  write_safetensors(bundle, dir_ / "partial.safetensors");
  const auto r = verify(at("partial.safetensors"));
  EXPECT_EQ(r.code, kExitDomainError);
  EXPECT_NE(r.err.find("MissingTensor"), std::string::npos);
  EXPECT_NE(r.err.find(dropped), std::string::npos);
}

TEST_F(Cli, MissingInputIsFileNotFound) {
  const auto r = run({"edit", "--weights", at("nope.safetensors"), "--embeddings", at("embeddings.safetensors"),
                      "--sidecar", at("embeddings.json"), "--out", at("o.safetensors"), "--report", at("o.json")});
  EXPECT_EQ(r.code, kExitDomainError);
  EXPECT_EQ(json::parse(r.err)["error"], "FileNotFound");
}

TEST_F(Cli, InspectToyAndSdLayouts) {
  const auto toy = run({"inspect", "--weights", at("weights.safetensors")});
  ASSERT_EQ(toy.code, kExitOk) << toy.err;
  std::istringstream lines(toy.out);
  std::vector<std::string> rows;
  for (std::string line; std::getline(lines, line);) rows.push_back(line);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "down_blocks.0.attentions.0.transformer_blocks.0.attn2.to_k.weight\t[6, 8]\tF32\tK:0");
  EXPECT_EQ(rows[4], "# 4 of 4 tensors selectable as cross-attention K/V");

  write_safetensors(fixtures::make_sd_bundle(3, false), dir_ / "sd.safetensors");
  const auto sd = run({"inspect", "--weights", at("sd.safetensors")});
  ASSERT_EQ(sd.code, kExitOk) << sd.err;
  EXPECT_NE(sd.out.find("# 64 of 68 tensors selectable"), std::string::npos);
  EXPECT_NE(sd.out.find("conv_in.weight\t[4, 4, 3, 3]\tF32\t-"), std::string::npos);
}

TEST_F(Cli, InspectTruncatedFileIsMalformed) {
  auto data = bytes(dir_ / "weights.safetensors");
  data.resize(12);
  write_file_bytes(dir_ / "cut.safetensors", data);
  const auto r = run({"inspect", "--weights", at("cut.safetensors")});
  EXPECT_EQ(r.code, kExitDomainError);
  EXPECT_EQ(json::parse(r.err)["error"], "MalformedHeader");
}

}  // namespace
}  // namespace rededit
