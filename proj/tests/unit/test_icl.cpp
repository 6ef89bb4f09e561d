#include <doctest.h>

#include <filesystem>

#include "assoclab/icl.hpp"
#include "assoclab/mock_backend.hpp"
#include "assoclab/synthetic_backend.hpp"
#include "../support/mock_script.hpp"

using namespace assoclab;
using assoclab::testing::MockScriptBuilder;

namespace {

std::string temp_script(const MockScriptBuilder& b, const char* name) {
  return b.write((std::filesystem::temp_directory_path() / name).string());
}

}  // namespace

TEST_CASE("build_sequence alternates x and y with BOS first") {
  SyntheticBackend backend(1, 20, 4, 1);
  const TokenPair pair{4, 9, 0.0, std::nullopt, 1, std::nullopt};
  const auto seq = build_sequence(backend, pair, 3);
  CHECK(seq.ids == std::vector<TokenId>{0, 4, 9, 4, 9, 4});
  CHECK(seq.bos_included);
  CHECK(build_sequence(backend, pair, 1).ids == std::vector<TokenId>{0, 4});
  CHECK_THROWS_AS(build_sequence(backend, pair, 0), Error);
}

TEST_CASE("schedule validation enforces monotonicity and context") {
  SyntheticBackend backend(1, 20, 4, 1);
  const RepetitionSchedule ok{{1, 2, 5, 9}};
  const RepetitionSchedule repeated{{1, 1, 2}};
  const RepetitionSchedule decreasing{{2, 1}};
  const RepetitionSchedule nonpositive{{0, 1}};
  CHECK_NOTHROW(ok.validate(backend));
  CHECK_THROWS_AS(repeated.validate(backend), Error);
  CHECK_THROWS_AS(decreasing.validate(backend), Error);
  CHECK_THROWS_AS(nonpositive.validate(backend), Error);

  backend.set_memory_cap(10);  // sequence for r needs 2r tokens
  const RepetitionSchedule fits{{1, 5}};
  CHECK_NOTHROW(fits.validate(backend));
  try {
    const RepetitionSchedule overflow{{1, 6}};
    overflow.validate(backend);
    FAIL("expected context overflow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ContextOverflow);
  }
}

TEST_CASE("run_trial reproduces scripted cosines and delta_s") {
  MockScriptBuilder b(16);
  b.pair(3, 5, 0.42,
         {{1, 0.42, false}, {2, 0.55, true}, {3, 0.80, true}, {4, 0.30, false}});
  MockBackend backend(temp_script(b, "icl_pair.json"));

  TokenPair pair{3, 5, 0.42, std::nullopt, 1, std::nullopt};
  const auto trace =
      run_trial(backend, pair, RepetitionSchedule{{1, 2, 3, 4}}, 1, nullptr);

  CHECK(trace.backend_id == "mock");
  REQUIRE(trace.records.size() == 4);
  const double expected_cos[] = {0.42, 0.55, 0.80, 0.30};
  const bool expected_ok[] = {false, true, true, false};
  for (int i = 0; i < 4; ++i) {
    CHECK(trace.records[i].r == i + 1);
    CHECK(trace.records[i].pair_cosine ==
          doctest::Approx(expected_cos[i]).epsilon(1e-12));
    CHECK(trace.records[i].delta_s ==
          doctest::Approx(expected_cos[i] - 0.42).epsilon(1e-12));
    CHECK(trace.records[i].correct == expected_ok[i]);
  }
  CHECK(trace.records[0].delta_s == 0.0);  // exact identity at r = 1
}

TEST_CASE("baseline comes from r = 1 even when the schedule skips it") {
  MockScriptBuilder b(16);
  b.pair(3, 5, 0.42, {{2, 0.55, true}, {4, 0.30, false}});
  MockBackend backend(temp_script(b, "icl_skip.json"));

  TokenPair pair{3, 5, 0.42, std::nullopt, 1, std::nullopt};
  const auto trace =
      run_trial(backend, pair, RepetitionSchedule{{2, 4}}, 1, nullptr);
  REQUIRE(trace.records.size() == 2);
  CHECK(trace.records[0].delta_s == doctest::Approx(0.55 - 0.42).epsilon(1e-12));
  CHECK(trace.records[1].delta_s == doctest::Approx(0.30 - 0.42).epsilon(1e-12));
}

TEST_CASE("trace cache returns identical records across trials") {
  SyntheticBackend backend(8, 25, 6, 2);
  TraceCache cache;
  TokenPair pair{4, 9, 0.0, std::nullopt, 2, std::nullopt};
  const RepetitionSchedule schedule{{1, 2, 3, 5}};
  const auto a = run_trial(backend, pair, schedule, 2, &cache);
  const auto b = run_trial(backend, pair, schedule, 2, &cache);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].pair_cosine == b.records[i].pair_cosine);
    CHECK(a.records[i].delta_s == b.records[i].delta_s);
    CHECK(a.records[i].predicted == b.records[i].predicted);
  }

  RepetitionRecord rec;
  CHECK(cache.get(backend.descriptor().model_id, 2, 4, 9, 3, rec));
  CHECK(rec.r == 3);
  CHECK_FALSE(cache.get(backend.descriptor().model_id, 2, 4, 9, 4, rec));
}

TEST_CASE("accuracy_curve averages over pairs and rejects mismatches") {
  MockScriptBuilder b(16);
  b.pair(3, 5, 0.42, {{1, 0.42, false}, {2, 0.55, true}});
  b.pair(7, 9, 0.30, {{1, 0.30, true}, {2, 0.50, true}});
  MockBackend backend(temp_script(b, "icl_curve.json"));

  const RepetitionSchedule schedule{{1, 2}};
  std::vector<RepetitionTrace> traces{
      run_trial(backend, TokenPair{3, 5, 0.42, std::nullopt, 1, std::nullopt},
                schedule, 1, nullptr),
      run_trial(backend, TokenPair{7, 9, 0.30, std::nullopt, 1, std::nullopt},
                schedule, 1, nullptr)};
  const auto curve = accuracy_curve(traces);
  REQUIRE(curve.size() == 2);
  CHECK(curve[0].r == 1);
  CHECK(curve[0].mean_accuracy == doctest::Approx(0.5));
  CHECK(curve[0].n == 2);
  CHECK(curve[1].mean_accuracy == doctest::Approx(1.0));

  traces[1].records.pop_back();
  try {
    accuracy_curve(traces);
    FAIL("expected aggregation error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AggregationError);
  }
}
