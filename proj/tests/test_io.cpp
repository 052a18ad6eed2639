#include <doctest.h>

#include <sstream>

#include "untangle/io.hpp"

using namespace untangle;

TEST_CASE("dtns float tensor round trip narrows to float32") {
    Tensor t(2, 3, {0.1, -1.5, 2.25, 1e-9, 3.0, -0.0});
    std::stringstream ss;
    write_dtns(ss, t);
    Tensor back = read_dtns_f32(ss);
    REQUIRE(back.rows == 2);
    REQUIRE(back.cols == 3);
    for (size_t i = 0; i < t.data.size(); ++i)
        CHECK(back.data[i] == static_cast<double>(static_cast<float>(t.data[i])));
}

TEST_CASE("dtns int matrix round trip is exact") {
    FactorMatrix m(3, 2, {0, 1, 2, 3, 1099511627776, -7});
    std::stringstream ss;
    write_dtns(ss, m);
    FactorMatrix back = read_dtns_i64(ss);
    CHECK(back == m);
}

TEST_CASE("dtns rejects wrong magic and dtype") {
    std::stringstream ss;
    ss << "NOPE";
    CHECK_THROWS_AS(read_dtns_f32(ss), RuntimeFailure);

    std::stringstream ss2;
    FactorMatrix m(1, 1, {3});
    write_dtns(ss2, m);
    CHECK_THROWS_AS(read_dtns_f32(ss2), RuntimeFailure);  // dtype mismatch
}

TEST_CASE("dtns truncation detected") {
    Tensor t(4, 4);
    std::stringstream ss;
    write_dtns(ss, t);
    std::string bytes = ss.str();
    std::stringstream cut(bytes.substr(0, bytes.size() - 7));
    CHECK_THROWS_AS(read_dtns_f32(cut), RuntimeFailure);
}

TEST_CASE("format_double round trips") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 1e300, 0.0, 42.0}) {
        std::string s = format_double(v);
        CHECK(std::stod(s) == v);
    }
    CHECK(format_double(std::nan("")) == "nan");
}

TEST_CASE("fnv1a hash is stable and input-sensitive") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") != fnv1a_hex("b"));
    CHECK(fnv1a_hex("abc") == fnv1a_hex("abc"));
}

TEST_CASE("strict json key checks") {
    json j = json::parse(R"({"a": 1, "b": 2})");
    CHECK_NOTHROW(require_keys_subset(j, {"a", "b", "c"}, "test"));
    CHECK_THROWS_AS(require_keys_subset(j, {"a"}, "test"), ValidationError);
    CHECK_NOTHROW(require_key(j, "a", "test"));
    CHECK_THROWS_AS(require_key(j, "z", "test"), ValidationError);
}
