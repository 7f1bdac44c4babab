#include <filesystem>

#include <gtest/gtest.h>

#include "sail/io.hpp"

using namespace sail;

namespace {

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "sail_io_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST(Hash, KnownDigest) {
    EXPECT_EQ(sha256_hex(std::string("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(sha256_hex(std::string()), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Saif, MatrixRoundTrip) {
    Matrix m(3, 2);
    m << 1.0, -2.5, 1e-300, 3.0, 0.1, -0.0;
    const auto p = scratch("m.saif");
    Json h;
    h["kind"] = "test";
    write_matrix_saif(p, h, m);
    const SaifFile f = read_saif(p);
    EXPECT_EQ(f.header.at("kind"), "test");
    EXPECT_EQ(f.header.at("rows"), 3);
    const Matrix back = matrix_from_saif(f);
    EXPECT_EQ(back, m);
    const std::string bytes = read_text(p);
    EXPECT_EQ(bytes.substr(0, 4), "SAIF");
}

TEST(Saif, RejectsForeignFile) {
    const auto p = scratch("bad.saif");
    write_text(p, "JUNKJUNKJUNKJUNK");
    try {
        read_saif(p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::io);
        EXPECT_EQ(e.code(), "bad-saif");
    }
}

TEST(Csv, SeventeenDigitsRoundTrip) {
    const auto p = scratch("t.csv");
    const double x = 0.1 + 0.2;
    write_csv(p, {"a", "b"}, {{x, 1.0 / 3.0}, {-1e-17, 2.0}});
    const CsvTable t = read_csv(p);
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.header[1], "b");
    EXPECT_EQ(t.rows[0][0], x);
    EXPECT_EQ(t.rows[0][1], 1.0 / 3.0);
    EXPECT_EQ(format_double(x), "0.30000000000000004");
}

TEST(Csv, ReportsLineOfBadCell) {
    const auto p = scratch("bad.csv");
    write_text(p, "a,b\n1,2\n3,x\n");
    try {
        read_csv(p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos);
    }
}
