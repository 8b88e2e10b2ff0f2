#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "thinfilm/diagnostics.hpp"
#include "thinfilm/io.hpp"
#include "thinfilm/prox_flow.hpp"

using namespace thinfilm;

TEST(FormatReal, RoundTripsAndSentinel) {
  const double x = 0.1 + 0.2;
  EXPECT_EQ(io::parse_real(io::format_real(x)), x);
  EXPECT_EQ(io::format_real(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_TRUE(std::isinf(io::parse_real("inf")));
  EXPECT_THROW(io::parse_real("1.0x"), Error);
}

TEST(DiagnosticsCsv, RoundTripWithInfiniteEnergy) {
  const auto p = EnergyParams::with_c0(1.0);
  const Field w0 = project_mean_zero(
      Field::sample(Grid(32), [](double h) { return 0.01 * std::cos(6.283185307179586 * h); }));
  ProxConfig cfg;
  cfg.tau = 1e-7;
  Trajectory t = evolve(w0, 5e-7, cfg, p);
  t.records[2].E = ExtReal::infinity();
  std::stringstream ss;
  io::write_diagnostics_csv(ss, t.records);
  const std::string text = ss.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), io::kDiagnosticsHeader);
  EXPECT_NE(text.find(",inf,"), std::string::npos);
  const auto back = io::read_diagnostics_csv(ss);
  ASSERT_EQ(back.size(), t.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].t, t.records[i].t);
    EXPECT_EQ(back[i].phi, t.records[i].phi);
    EXPECT_EQ(back[i].vi_min, t.records[i].vi_min);
  }
  EXPECT_TRUE(back[2].E.is_infinite());
}

TEST(DiagnosticsCsv, SchemaViolationsRejected) {
  const std::string h = std::string(io::kDiagnosticsHeader) + "\n";
  std::istringstream bad_header("t,phi\n");
  EXPECT_THROW(io::read_diagnostics_csv(bad_header), Error);
  std::istringstream short_row(h + "0,1,2\n");
  EXPECT_THROW(io::read_diagnostics_csv(short_row), Error);
  std::istringstream inf_phi(h + "0,inf,0,1,1,0,0,0,0\n");
  EXPECT_THROW(io::read_diagnostics_csv(inf_phi), Error);
  std::istringstream time_back(h + "1,0.5,0,1,1,0,0,0,0\n0,0.5,0,1,1,0,0,0,0\n");
  EXPECT_THROW(io::read_diagnostics_csv(time_back), Error);
}

TEST(Snapshot, WriteReadWithDerivativesAndSlope) {
  const Grid g(16);
  const Field w = project_mean_zero(Field::sample(g, [](double h) { return h * (1 - h); }));
  const Field u = map(w, [](double x) { return 1 + x; });
  std::stringstream ss;
  io::write_snapshot(ss, w, {true, u});
  const io::Snapshot s = io::read_snapshot(ss);
  EXPECT_EQ(s.columns, (std::vector<std::string>{"h", "w", "w_h", "w_hh", "u"}));
  ASSERT_EQ(s.rows(), 16u);
  for (int i = 0; i < 16; ++i) {
    EXPECT_EQ(s.data.at("w")[i], w[i]);
    EXPECT_EQ(s.data.at("u")[i], u[i]);
    EXPECT_EQ(s.data.at("w_hh")[i], d2(w)[i]);
  }
}

TEST(Snapshot, PlainHeader) {
  std::stringstream ss;
  io::write_snapshot(ss, Field(Grid(8)));
  std::string first;
  std::getline(ss, first);
  EXPECT_EQ(first, "h,w");
}

TEST(Snapshot, Malformed) {
  std::istringstream no_h("w\n1\n");
  EXPECT_THROW(io::read_snapshot(no_h), Error);
  std::istringstream ragged("h,w\n0,1\n0.5\n");
  EXPECT_THROW(io::read_snapshot(ragged), Error);
}
