#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "rejref/dataset.hpp"
#include "rejref/generators.hpp"

using namespace rejref;

namespace {

Dataset parse(const std::string& text, CsvSchema schema = {}) {
    std::istringstream in(text);
    return parse_csv(in, schema);
}

std::string error_of(const std::string& text, CsvSchema schema = {}) {
    try {
        parse(text, schema);
    } catch (const DataError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Csv, ParsesSmallFile) {
    const Dataset d = parse("x1,label,x2\n0.5,1,2\n-1,2,3.25\n4,3,-0.5\n");
    EXPECT_EQ(d.n(), 3);
    EXPECT_EQ(d.p(), 2);
    EXPECT_EQ(d.k, 3);
    EXPECT_EQ(d.y, (std::vector<int>{1, 2, 3}));
    EXPECT_DOUBLE_EQ(d.X(1, 1), 3.25);
    EXPECT_EQ(d.feature_names, (std::vector<std::string>{"x1", "x2"}));
}

TEST(Csv, MalformedRowNamesLine) {
    EXPECT_NE(error_of("a,label\n1,1\n2\n").find("line 3"), std::string::npos);
    EXPECT_NE(error_of("a,label\n1,1\nzz,2\n").find("line 3"), std::string::npos);
}

TEST(Csv, UnknownLabelsAreListed) {
    const std::string msg = error_of("a,label\n1,0\n2,1\n3,-2\n");
    EXPECT_NE(msg.find("-2, 0"), std::string::npos) << msg;
    CsvSchema s;
    s.k = 2;
    EXPECT_NE(error_of("a,label\n1,3\n2,1\n", s).find("{3}"), std::string::npos);
    EXPECT_NE(error_of("a,label\n1,1.5\n").find("not an integer"), std::string::npos);
}

TEST(Csv, MissingLabelColumn) {
    EXPECT_THROW(parse("a,b\n1,2\n"), DataError);
    CsvSchema s;
    s.require_labels = false;
    s.k = 3;
    const Dataset d = parse("a,b\n1,2\n3,4\n", s);
    EXPECT_EQ(d.n(), 2);
    EXPECT_EQ(d.p(), 2);
}

TEST(Csv, EmptyInputs) {
    EXPECT_THROW(parse(""), DataError);
    EXPECT_THROW(parse("a,label\n"), DataError);
}

TEST(Csv, WriteThenReadRoundTrip) {
    const SimulatedSplit s = gen_example2({30, 5, 5}, 9);
    std::ostringstream out;
    write_csv(out, s.train);
    CsvSchema schema;
    schema.k = 3;
    const Dataset back = parse(out.str(), schema);
    EXPECT_EQ(back.y, s.train.y);
    EXPECT_EQ(back.X, s.train.X);
}

TEST(Standardizer, ConstantFeatureBecomesZero) {
    Dataset d;
    d.k = 2;
    d.X.resize(4, 2);
    d.X << 1, 5, 2, 5, 3, 5, 4, 5;
    d.y = {1, 2, 1, 2};
    const auto [s, t] = normalize(d);
    EXPECT_TRUE(s.zero_variance[1]);
    EXPECT_FALSE(s.zero_variance[0]);
    EXPECT_TRUE(t.X.col(1).isZero());
    EXPECT_NEAR(t.X.col(0).mean(), 0.0, 1e-15);
    EXPECT_NEAR((t.X.col(0).array().square().sum()) / 3.0, 1.0, 1e-14);
    EXPECT_THROW(s.apply(Eigen::MatrixXd::Zero(2, 3)), DataError);
}

TEST(Features, TopMadKeepsTheSpreadColumns) {
    Dataset d;
    d.k = 2;
    d.X.resize(5, 3);
    d.X << 0, 10, 1, 1, -10, 1, 2, 20, 1, 3, -20, 1, 4, 0, 1;
    d.y = {1, 2, 1, 2, 1};
    EXPECT_EQ(top_mad_features(d, 1), (std::vector<Eigen::Index>{1}));
    EXPECT_EQ(top_mad_features(d, 2), (std::vector<Eigen::Index>{0, 1}));
}

TEST(Generators, ShapesAndDefaults) {
    const SimulatedSplit s = gen_example1({0, 0, 100}, 1);
    EXPECT_EQ(s.train.n(), 150);
    EXPECT_EQ(s.tune.n(), 150);
    EXPECT_EQ(s.test.n(), 100);
    EXPECT_EQ(s.train.p(), 100);
    EXPECT_EQ(s.train.k, 4);
    EXPECT_EQ(gen_example2({10, 10, 10}, 1).train.p(), 400);
    EXPECT_EQ(gen_example3({10, 10, 10}, 1).train.k, 4);
    EXPECT_THROW(generate({4, {10, 10, 10}, -1, 1, 0}), std::invalid_argument);
}

TEST(Generators, ExampleOneClassOneRectangle) {
    const SimulatedSplit s = generate({1, {2000, 1, 1}, 0, 3, 0});
    for (Eigen::Index i = 0; i < s.train.n(); ++i) {
        if (s.train.y[i] != 1) continue;
        EXPECT_GE(s.train.X(i, 0), -0.3);
        EXPECT_LE(s.train.X(i, 0), 1.0);
        EXPECT_GE(s.train.X(i, 1), -0.3);
        EXPECT_LE(s.train.X(i, 1), 1.0);
    }
}

TEST(Generators, DeterministicAndOrderIndependent) {
    const SimulatedSplit a = generate({3, {40, 40, 40}, 5, 77, 4});
    const SimulatedSplit b = generate({3, {40, 40, 40}, 5, 77, 4});
    EXPECT_EQ(a.train.X, b.train.X);
    EXPECT_EQ(a.test.y, b.test.y);
    // Replicate 4 does not depend on whether replicates 0..3 were drawn first.
    for (int r = 0; r < 4; ++r) generate({3, {40, 40, 40}, 5, 77, static_cast<std::uint64_t>(r)});
    const SimulatedSplit c = generate({3, {40, 40, 40}, 5, 77, 4});
    EXPECT_EQ(a.tune.X, c.tune.X);
    const SimulatedSplit other = generate({3, {40, 40, 40}, 5, 77, 5});
    EXPECT_NE(a.train.X, other.train.X);
    EXPECT_NE(a.train.X, a.tune.X.topRows(40));
}

TEST(Generators, EqualPriorsAndLabelFreeNoise) {
    for (int example : {1, 2, 3}) {
        const SimulatedSplit s = generate({example, {1, 1, 12000}, 3, 2024, 0});
        const Dataset& t = s.test;
        const double n = static_cast<double>(t.n());
        const double prior = 1.0 / t.k;
        const double se = std::sqrt(prior * (1 - prior) / n);
        for (int c : t.class_counts()) EXPECT_LT(std::abs(c / n - prior), 3 * se) << "example " << example;

        for (Eigen::Index f = 2; f < t.p(); ++f) {
            double sum_in = 0, sum_out = 0, n_in = 0;
            for (Eigen::Index i = 0; i < t.n(); ++i) {
                if (t.y[i] == 1) { sum_in += t.X(i, f); ++n_in; } else { sum_out += t.X(i, f); }
            }
            const double n_out = n - n_in;
            const double gap = sum_in / n_in - sum_out / n_out;
            EXPECT_LT(std::abs(gap), 3 * 0.1 * std::sqrt(1 / n_in + 1 / n_out));
            const double sd = std::sqrt((t.X.col(f).array() - t.X.col(f).mean()).square().sum() / (n - 1));
            EXPECT_NEAR(sd, 0.1, 0.005);
        }
    }
}
