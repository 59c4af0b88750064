#include <ccas/cli.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ccas;

namespace
{

struct Run
{
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args)
{
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

nlohmann::json run_json(std::vector<std::string> args, int expect = 0)
{
    args.insert(args.begin(), {"--format", "json"});
    const auto r = run(args);
    EXPECT_EQ(r.code, expect) << r.err;
    return nlohmann::json::parse(r.out);
}

std::string poly(const Poly &p)
{
    return p.to_string();
}

} // namespace

TEST(CliGrammar, ParsePoly)
{
    const Poly n = Poly::n();
    EXPECT_EQ(parse_poly("1-n/2"), Poly(1) - n * Poly(ratio(1, 2)));
    EXPECT_EQ(parse_poly(" 2*(n+1)/4 "), (n + Poly(1)) * Poly(ratio(1, 2)));
    EXPECT_EQ(parse_poly("-(-3)"), Poly(3));
    EXPECT_THROW(parse_poly("n/n"), ConfigError);
    EXPECT_THROW(parse_poly("1/0"), ConfigError);
    EXPECT_THROW(parse_poly("x"), ConfigError);
    EXPECT_THROW(parse_poly("2+"), ConfigError);
}

TEST(CliGrammar, ParseDim)
{
    EXPECT_TRUE(parse_dim("sym").is_symbolic());
    EXPECT_EQ(parse_dim("6"), Dim::of(6));
    EXPECT_THROW(parse_dim("5"), ConfigError);
    EXPECT_THROW(parse_dim("2"), ConfigError);
    EXPECT_THROW(parse_dim("n"), ConfigError);
}

TEST(CliGrammar, FdDefaultsFromEnvironment)
{
    ::setenv("CCAS_FD", "order=6;res=24,32", 1);
    const auto d = fd_defaults();
    EXPECT_EQ(d.order, 6);
    EXPECT_EQ(d.resolutions, (std::vector<int>{24, 32}));
    ::setenv("CCAS_FD", "order=x", 1);
    EXPECT_THROW(fd_defaults(), ConfigError);
    ::unsetenv("CCAS_FD");
    EXPECT_EQ(fd_defaults().order, 4);
}

TEST(CliTable, SymmetricSquareDifferences)
{
    const auto j = run_json({"table", "--family", "symsq0", "--n", "sym", "--w", "sym"});
    const Poly n = Poly::n(), w = Poly::w();
    const std::vector<Poly> want{w * Poly(2) + Poly(4), w * Poly(4) + Poly(4), w * Poly(4) + n * Poly(2) + Poly(4),
                                 w * Poly(6) + n * Poly(2) + Poly(4), w * Poly(8) + n * Poly(4)};
    std::vector<std::string> got;
    for (const auto &s : j["result"]["slots"]) {
        got.push_back(s["difference"]);
    }
    ASSERT_EQ(got.size(), 6u);
    for (std::size_t i = 0; i < want.size(); ++i) {
        EXPECT_EQ(got[i + 1], poly(want[i]));
    }
}

TEST(CliTable, CubeDimensionTenGroup)
{
    const auto j = run_json({"table", "--family", "cube", "--n", "10", "--w", "-5"});
    bool found = false;
    for (const auto &g : j["result"]["groups"]) {
        const auto s = g["slots"];
        found = found || (s.size() == 3 && s[0] == nlohmann::json::array({0, 0}) &&
                          s[1] == nlohmann::json::array({3, 1}) && s[2] == nlohmann::json::array({6, 0}));
    }
    EXPECT_TRUE(found);
}

TEST(CliTable, OneFormEigenvaluesAtWeightZero)
{
    // a0 + n - 1, a0 - 2w + n + 1, a0 - 2w - n + 1, a0 - 2w + n - 3, a0 - 4w - n + 3 with a0 = 0
    const auto j = run_json({"table", "--family", "oneform", "--n", "6", "--w", "0"});
    std::vector<std::string> got;
    for (const auto &s : j["result"]["slots"]) {
        got.push_back(s["beta"]);
    }
    EXPECT_EQ(got, (std::vector<std::string>{"5", "7", "-5", "3", "-3"}));
}

TEST(CliDerive, SecondOrderOneFormOperator)
{
    const auto j = run_json({"derive", "--family", "oneform", "--n", "sym", "--w-top", "2-n/2", "--target", "bottom"});
    EXPECT_EQ(j["result"]["order"], 2);
    EXPECT_EQ(j["result"]["classification"], "invariant operator of order 2");
    EXPECT_EQ(j["result"]["factors"].size(), 4u);
}

TEST(CliDerive, DimensionFourSquare)
{
    const auto j = run_json({"derive", "--family", "symsq0", "--n", "4", "--w", "-2", "--variant", "dim4"});
    EXPECT_EQ(j["result"]["order"], 4);
    std::vector<std::string> labels;
    for (const auto &f : j["result"]["factors"]) {
        labels.push_back(f["label"]);
    }
    EXPECT_EQ(labels, (std::vector<std::string>{"beta_4", "beta_4", "beta_2^1", "beta_2^2"}));
}

TEST(CliDerive, CubeInDimensionFour)
{
    const auto r = run({"derive", "--family", "cube", "--n", "4", "--w", "-2"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("zero leading coefficient"), std::string::npos);
    EXPECT_NE(r.out.find("probe-dim4"), std::string::npos);
}

TEST(CliDerive, LatexAndPrincipal)
{
    const auto l = run({"--format", "latex", "derive", "--family", "oneform", "--n", "6", "--w", "1"});
    EXPECT_EQ(l.code, 0);
    EXPECT_NE(l.out.find("\\nabla"), std::string::npos);
    const auto p = run_json({"principal", "--family", "cube", "--n", "sym", "--w", "-n/2"});
    EXPECT_EQ(p["result"]["vanishes_at"], nlohmann::json({4, 6, 10}));
    EXPECT_EQ(p["result"]["order"], 6);
}

TEST(CliVerify, ConformalKillingPasses)
{
    const auto j = run_json({"verify", "invariance", "--family", "oneform", "--n", "6", "--w", "1"});
    EXPECT_TRUE(j["pass"]);
    EXPECT_GE(j["result"]["checks"][0]["order"].get<double>(), 3.5);
}

TEST(CliVerify, WrongWeightFails)
{
    const auto j =
        run_json({"verify", "invariance", "--family", "symsq0", "--n", "6", "--w", "-3", "--wrong-weight"}, 1);
    EXPECT_FALSE(j["pass"]);
    EXPECT_EQ(j["claims"][0], "invariance-negative-control");
}

TEST(CliVerify, CubeDimensionTenVanishing)
{
    const auto j = run_json({"verify", "vanishing", "--family", "cube", "--n", "10"});
    EXPECT_TRUE(j["pass"]);
    EXPECT_EQ(j["result"]["checks"].size(), 2u);
}

TEST(CliVerify, EigenvalueAndConvergence)
{
    EXPECT_EQ(run({"verify", "eigenvalue", "--family", "symsq0", "--n", "6", "--w", "-2", "--res", "16"}).code, 0);
    EXPECT_EQ(run({"verify", "convergence", "--fd", "6"}).code, 0);
}

TEST(CliExit, Codes)
{
    EXPECT_EQ(run({"table", "--family", "foo"}).code, exit_invalid_config);
    EXPECT_EQ(run({"table", "--family", "oneform", "--n", "7"}).code, exit_invalid_config);
    EXPECT_EQ(run({"derive", "--family", "oneform", "--n", "6", "--w", "3"}).code, exit_invalid_config);
    EXPECT_EQ(run({"verify", "invariance", "--family", "oneform", "--n", "sym", "--w", "1"}).code,
              exit_invalid_config);
    EXPECT_EQ(run({"verify"}).code, exit_invalid_config);
    const auto r = run({"derive", "--family", "cube", "--n", "8", "--w", "-4", "--target", "nu"});
    EXPECT_EQ(r.code, exit_derivation_failed);
    EXPECT_NE(r.err.find("not well-defined"), std::string::npos);
    EXPECT_EQ(run({"--help"}).code, exit_pass);
}

TEST(CliReport, SchemaSeedAndDeterminism)
{
    const std::vector<std::string> args{"--seed", "42", "verify", "invariance", "--family", "oneform",
                                        "--n",    "6",  "--w",    "-1",         "--res",    "16,24"};
    const auto path = std::filesystem::temp_directory_path() / "ccas_cli_report.json";
    auto with_out = args;
    with_out.insert(with_out.begin(), {"--format", "json", "--out", path.string()});
    const auto a = run(with_out);
    const auto b = run(with_out);
    EXPECT_EQ(a.out, b.out);
    std::ifstream f(path);
    std::stringstream file;
    file << f.rdbuf();
    EXPECT_EQ(file.str(), a.out);
    const auto j = nlohmann::json::parse(a.out);
    EXPECT_EQ(j["schema"], 1);
    EXPECT_EQ(j["config"]["seed"], 42);
    EXPECT_TRUE(j["config"].contains("numeric"));
    EXPECT_FALSE(j["claims"].empty());
    EXPECT_FALSE(j["version"].get<std::string>().empty());
    const auto t = run_json({"table", "--family", "oneform"});
    EXPECT_FALSE(t["config"].contains("numeric"));
    std::filesystem::remove(path);
}
