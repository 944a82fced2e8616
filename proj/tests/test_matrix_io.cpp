#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "bsechase/matrix_io.hpp"
#include "oracles.hpp"

using namespace bsechase;
using namespace bsechase::io;

namespace {

class TempDir {
public:
    explicit TempDir(const std::string& tag)
        : path_(fs::temp_directory_path() / ("bsechase_io_" + tag + "_" + std::to_string(::getpid()))) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

DenseHermitian real_symmetric(std::size_t n) {
    DenseHermitian h(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) h.set(i, j, Complex(std::sin(1.0 + i * 7.0 + j), 0.0));
    return h;
}

/// Concatenation of every rank's lower-triangle buffer.
std::vector<Complex> concatenated(const StripedBuffers& b) {
    std::vector<Complex> out;
    for (const auto& part : b.lower) out.insert(out.end(), part.begin(), part.end());
    return out;
}

DenseHermitian pipeline(const fs::path& dir, std::size_t ranks, ReadOptions opts = {}) {
    return gather_blocked(assemble_from_files(dir, ranks, opts).blocked);
}

void write_raw_file(const fs::path& path, std::size_t n, std::size_t start, std::size_t count) {
    StripedFileHeader h;
    h.n = n;
    h.row_start = start;
    h.row_count = count;
    std::string bytes = io::detail::encode_header(h);
    bytes.append(h.payload_bytes(), '\0');
    std::ofstream(path, std::ios::binary) << bytes;
}

}  // namespace

// ---------------------------------------------------------------- layout

TEST(RankLayout, StripesBalancedEarlierRanksLarger) {
    const auto l = RankLayout::make(10, 4);
    ASSERT_EQ(l.striped.size(), 4u);
    EXPECT_EQ(l.striped[0], (RowRange{0, 3}));
    EXPECT_EQ(l.striped[1], (RowRange{3, 3}));
    EXPECT_EQ(l.striped[2], (RowRange{6, 2}));
    EXPECT_EQ(l.striped[3], (RowRange{8, 2}));
    EXPECT_EQ(l.owner_of_row(5), 1u);
}

TEST(RankLayout, GridTilesMatrixWithBalancedBlocks) {
    const auto l = RankLayout::make(130, 9);
    ASSERT_TRUE(l.has_grid());
    EXPECT_EQ(l.grid_side, 3u);
    std::vector<int> cover(130 * 130, 0);
    std::size_t lo = 130, hi = 0;
    for (const auto& b : l.grid) {
        lo = std::min({lo, b.rows.count, b.cols.count});
        hi = std::max({hi, b.rows.count, b.cols.count});
        for (std::size_t r = b.rows.start; r < b.rows.end(); ++r)
            for (std::size_t c = b.cols.start; c < b.cols.end(); ++c) ++cover[r * 130 + c];
    }
    EXPECT_LE(hi - lo, 1u);
    for (int x : cover) ASSERT_EQ(x, 1);
}

TEST(RankLayout, NonSquareHasNoGrid) {
    EXPECT_FALSE(RankLayout::make(64, 3).has_grid());
    EXPECT_THROW(RankLayout::make(0, 4), LayoutError);
    EXPECT_THROW(RankLayout::make(8, 0), LayoutError);
}

// ---------------------------------------------------------------- writing

TEST(WriteStriped, FourByFourSingleFilePayload) {
    TempDir tmp("n4");
    const auto headers = write_striped(oracle::random_hermitian(4, 1), tmp.path(), 1);
    ASSERT_EQ(headers.size(), 1u);
    EXPECT_EQ(headers[0].payload_bytes(), 160u);
    EXPECT_EQ(fs::file_size(tmp.path() / "part_0.bsem"), kHeaderBytes + 160u);
}

TEST(WriteStriped, FourFilesPartitionRows) {
    TempDir tmp("n64");
    const auto headers = write_striped(oracle::random_hermitian(64, 2), tmp.path(), 4);
    ASSERT_EQ(headers.size(), 4u);
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_EQ(headers[k].row_start, 16u * k);
        EXPECT_EQ(headers[k].row_count, 16u);
        EXPECT_EQ(headers[k].n, 64u);
    }
    const auto m = read_manifest(tmp.path());
    EXPECT_EQ(m.n, 64u);
    EXPECT_EQ(m.num_files, 4u);
    EXPECT_EQ(m.ranges[3], (RowRange{48, 16}));
}

TEST(WriteStriped, HeaderBytesAreLittleEndian) {
    TempDir tmp("hdr");
    write_striped(oracle::random_hermitian(5, 3), tmp.path(), 1);
    std::ifstream in(tmp.path() / "part_0.bsem", std::ios::binary);
    std::vector<unsigned char> b(kHeaderBytes);
    in.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(b.size()));
    EXPECT_EQ(std::string(b.begin(), b.begin() + 8), "BSEMAT01");
    EXPECT_EQ(b[8], 1u);  // version
    EXPECT_EQ(b[12], 5u);  // n
    EXPECT_EQ(b[20], 0u);  // row_start
    EXPECT_EQ(b[28], 5u);  // row_count
}

TEST(WriteStriped, StoredBytesIndependentOfFileCount) {
    const auto h = oracle::random_hermitian(37, 4);
    for (std::size_t files : {1u, 2u, 5u, 7u}) {
        TempDir tmp("bytes" + std::to_string(files));
        write_striped(h, tmp.path(), files);
        std::uintmax_t total = 0;
        for (std::size_t k = 0; k < files; ++k) total += fs::file_size(tmp.path() / ("part_" + std::to_string(k) + ".bsem")) - kHeaderBytes;
        EXPECT_EQ(total, 16u * 37u * 38u / 2u);
    }
}

TEST(WriteStriped, RowGeneratorMatchesMatrixOverload) {
    const auto h = oracle::random_hermitian(20, 5);
    TempDir a("gen_a"), b("gen_b");
    write_striped(h, a.path(), 3);
    write_striped(20, [&](std::size_t r, std::span<Complex> out) { for (std::size_t c = 0; c <= r; ++c) out[c] = h(r, c); },
                  b.path(), 3);
    EXPECT_EQ(read_manifest(a.path()).checksum, read_manifest(b.path()).checksum);
    EXPECT_EQ(read_manifest(a.path()).checksum, lower_triangle_checksum(h));
}

TEST(WriteStriped, UnwritableDirectoryReportsPath) {
    try {
        write_striped(oracle::random_hermitian(3, 1), "/proc/bsechase_forbidden/x", 1);
        FAIL() << "expected an I/O error";
    } catch (const IoError& e) {
        EXPECT_NE(e.path().find("bsechase_forbidden"), std::string::npos);
    }
    EXPECT_THROW(write_striped(oracle::random_hermitian(3, 1), "/tmp", 0), PreconditionError);
}

// ---------------------------------------------------------------- reading

TEST(ReadStriped, SingleReaderHoldsWholeLowerTriangle) {
    TempDir tmp("r1");
    const auto h = oracle::random_hermitian(12, 6);
    write_striped(h, tmp.path(), 2);
    const auto [buf, log] = read_striped_concurrent(tmp.path(), RankLayout::make(12, 1));
    std::vector<Complex> ref;
    for (std::size_t r = 0; r < 12; ++r)
        for (std::size_t c = 0; c <= r; ++c) ref.push_back(h(r, c));
    EXPECT_EQ(buf.lower[0], ref);
    EXPECT_GE(log.max_single_reader_seconds, 0.0);
}

TEST(ReadStriped, FourReadersConcatenateToSingleReader) {
    TempDir tmp("r4");
    write_striped(oracle::random_hermitian(64, 7), tmp.path(), 4);
    const auto one = read_striped_concurrent(tmp.path(), RankLayout::make(64, 1)).first;
    const auto four = read_striped_concurrent(tmp.path(), RankLayout::make(64, 4)).first;
    EXPECT_EQ(concatenated(four), one.lower[0]);
}

TEST(ReadStriped, MisalignedFilesDeliverRowsToOwners) {
    TempDir tmp("mis");
    const auto h = oracle::random_hermitian(50, 8);
    write_striped(h, tmp.path(), 3);  // 17/17/16 rows against stripes of 13/13/12/12
    const auto layout = RankLayout::make(50, 4);
    const auto buf = read_striped_concurrent(tmp.path(), layout).first;
    for (std::size_t rank = 0; rank < 4; ++rank) {
        const auto rr = layout.striped[rank];
        EXPECT_EQ(buf.lower[rank].size(), lower_entries(rr));
        for (std::size_t r = rr.start; r < rr.end(); ++r)
            for (std::size_t c = 0; c <= r; ++c) ASSERT_EQ(buf.at(rank, r, c), h(r, c));
    }
}

TEST(ReadStriped, CorruptMagicIsFormatError) {
    TempDir tmp("magic");
    write_striped(oracle::random_hermitian(8, 1), tmp.path(), 2);
    {
        std::fstream f(tmp.path() / "part_1.bsem", std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXXXXXX", 8);
    }
    EXPECT_THROW(read_striped_concurrent(tmp.path(), RankLayout::make(8, 1)), FormatError);
}

TEST(ReadStriped, UnknownVersionIsFormatError) {
    TempDir tmp("ver");
    write_striped(oracle::random_hermitian(8, 1), tmp.path(), 1);
    {
        std::fstream f(tmp.path() / "part_0.bsem", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(8);
        f.put(static_cast<char>(9));
    }
    EXPECT_THROW(read_striped_concurrent(tmp.path(), RankLayout::make(8, 1)), FormatError);
}

TEST(ReadStriped, OverlappingAndMissingRowsAreLayoutErrors) {
    {
        TempDir tmp("overlap");
        write_raw_file(tmp.path() / "part_0.bsem", 10, 0, 6);
        write_raw_file(tmp.path() / "part_1.bsem", 10, 4, 6);
        std::ofstream(tmp.path() / "manifest.txt")
            << "n 10\nnum_files 2\nfile part_0.bsem 0 6\nfile part_1.bsem 4 6\nchecksum 0\n";
        EXPECT_THROW(read_striped_concurrent(tmp.path(), RankLayout::make(10, 1)), LayoutError);
    }
    {
        TempDir tmp("gap");
        write_raw_file(tmp.path() / "part_0.bsem", 10, 0, 4);
        write_raw_file(tmp.path() / "part_1.bsem", 10, 6, 4);
        std::ofstream(tmp.path() / "manifest.txt")
            << "n 10\nnum_files 2\nfile part_0.bsem 0 4\nfile part_1.bsem 6 4\nchecksum 0\n";
        EXPECT_THROW(read_striped_concurrent(tmp.path(), RankLayout::make(10, 1)), LayoutError);
    }
}

TEST(ReadStriped, MissingFileAndWrongOrder) {
    TempDir tmp("missing");
    write_striped(oracle::random_hermitian(9, 1), tmp.path(), 3);
    EXPECT_THROW(read_striped_concurrent(tmp.path(), RankLayout::make(10, 1)), LayoutError);
    fs::remove(tmp.path() / "part_2.bsem");
    EXPECT_THROW(read_striped_concurrent(tmp.path(), RankLayout::make(9, 1)), IoError);
}

TEST(ReadStriped, TruncatedPayloadIsFormatError) {
    TempDir tmp("trunc");
    write_striped(oracle::random_hermitian(9, 1), tmp.path(), 1);
    fs::resize_file(tmp.path() / "part_0.bsem", kHeaderBytes + 100);
    EXPECT_THROW(read_striped_concurrent(tmp.path(), RankLayout::make(9, 1)), FormatError);
}

// ---------------------------------------------------------------- completion

TEST(HermitianComplete, SingleRankSendsNothing) {
    TempDir tmp("c1");
    const auto h = oracle::random_hermitian(15, 2);
    write_striped(h, tmp.path(), 1);
    const auto striped = read_striped_concurrent(tmp.path(), RankLayout::make(15, 1)).first;
    const auto [full, log] = hermitian_complete(striped);
    EXPECT_EQ(log.messages, 0u);
    EXPECT_EQ(log.bytes, 0u);
    EXPECT_EQ(full.rows[0], h.storage());
}

TEST(HermitianComplete, FourRanksBitwiseWithClosedFormVolume) {
    TempDir tmp("c4");
    const auto h = oracle::random_hermitian(64, 3);
    write_striped(h, tmp.path(), 2);
    const auto layout = RankLayout::make(64, 4);
    const auto striped = read_striped_concurrent(tmp.path(), layout).first;
    const auto [full, log] = hermitian_complete(striped);
    EXPECT_LE(log.messages, 4u * 3u);
    EXPECT_EQ(log.bytes, expected_completion_bytes(layout));
    EXPECT_EQ(log.bytes, 16u * 6u * 16u * 16u);
    std::vector<Complex> all;
    for (const auto& r : full.rows) all.insert(all.end(), r.begin(), r.end());
    EXPECT_EQ(all, h.storage());
}

TEST(HermitianComplete, RealSymmetricUpperEqualsTranspose) {
    TempDir tmp("csym");
    const auto h = real_symmetric(21);
    write_striped(h, tmp.path(), 3);
    const auto layout = RankLayout::make(21, 5);
    const auto [full, log] = hermitian_complete(read_striped_concurrent(tmp.path(), layout).first);
    for (std::size_t rank = 0; rank < 5; ++rank) {
        const auto rr = layout.striped[rank];
        for (std::size_t r = rr.start; r < rr.end(); ++r)
            for (std::size_t c = 0; c < 21; ++c) ASSERT_EQ(full.rows[rank][(r - rr.start) * 21 + c], h(c, r));
    }
    EXPECT_EQ(log.bytes, expected_completion_bytes(layout));
}

// ---------------------------------------------------------------- redistribution and gather

TEST(Redistribute, SingleRankBlockIsWholeMatrix) {
    TempDir tmp("d1");
    const auto h = oracle::random_hermitian(11, 4);
    write_striped(h, tmp.path(), 1);
    const auto a = assemble_from_files(tmp.path(), 1);
    EXPECT_EQ(a.blocked.blocks[0], h.storage());
    EXPECT_EQ(a.redistribution_log.messages, 0u);
}

TEST(Redistribute, FourRanksGiveFourQuadrants) {
    TempDir tmp("d4");
    const auto h = oracle::random_hermitian(64, 5);
    write_striped(h, tmp.path(), 4);
    const auto a = assemble_from_files(tmp.path(), 4);
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_EQ(a.blocked.layout.grid[k].rows.count, 32u);
        EXPECT_EQ(a.blocked.layout.grid[k].cols.count, 32u);
        EXPECT_EQ(a.blocked.blocks[k].size(), 32u * 32u);
    }
    EXPECT_EQ(gather_blocked(a.blocked), h);
    EXPECT_EQ(a.redistribution_log.bytes % kEntryBytes, 0u);
}

TEST(Redistribute, NonSquareRankCountRejected) {
    TempDir tmp("d3");
    write_striped(oracle::random_hermitian(16, 6), tmp.path(), 1);
    const auto striped = read_striped_concurrent(tmp.path(), RankLayout::make(16, 3)).first;
    const auto full = hermitian_complete(striped).first;
    EXPECT_THROW(redistribute_striped_to_blocked(full), LayoutError);
    EXPECT_THROW(assemble_from_files(tmp.path(), 3), LayoutError);
}

TEST(GatherBlocked, MissingBlockIsError) {
    TempDir tmp("gmiss");
    write_striped(oracle::random_hermitian(16, 7), tmp.path(), 1);
    auto a = assemble_from_files(tmp.path(), 4);
    a.blocked.blocks[2].clear();
    EXPECT_THROW(gather_blocked(a.blocked), LayoutError);
}

TEST(GatherBlocked, ZeroedBlockDetectedByChecksum) {
    TempDir tmp("gzero");
    write_striped(oracle::random_hermitian(30, 8), tmp.path(), 2);
    const auto checksum = read_manifest(tmp.path()).checksum;
    auto a = assemble_from_files(tmp.path(), 9);
    EXPECT_TRUE(verify_blocked(a.blocked, checksum).ok());
    // Below the diagonal: the stored checksum disagrees.
    auto lower = a.blocked;
    std::fill(lower.blocks[3].begin(), lower.blocks[3].end(), Complex{});  // grid (1, 0)
    EXPECT_FALSE(verify_blocked(lower, checksum).checksum_ok);
    // A diagonal block: checksum and Hermitian consistency both fail.
    auto diag = a.blocked;
    std::fill(diag.blocks[4].begin(), diag.blocks[4].end(), Complex{});
    EXPECT_FALSE(verify_blocked(diag, checksum).ok());
    // Above the diagonal: the mirror no longer matches.
    auto upper = a.blocked;
    std::fill(upper.blocks[1].begin(), upper.blocks[1].end(), Complex{});
    EXPECT_FALSE(verify_blocked(upper, checksum).ok());
}

// ---------------------------------------------------------------- whole pipeline

TEST(Pipeline, IdentityAcrossSizesRanksAndFiles) {
    for (std::size_t n : {4u, 63u, 64u, 130u}) {
        const auto h = oracle::random_hermitian(n, 1000 + n);
        for (std::size_t files : {1u, 3u, 5u}) {
            TempDir tmp("p" + std::to_string(n) + "_" + std::to_string(files));
            write_striped(h, tmp.path(), files);
            for (std::size_t ranks : {1u, 4u, 9u, 16u})
                ASSERT_EQ(pipeline(tmp.path(), ranks), h) << "N=" << n << " files=" << files << " R=" << ranks;
        }
    }
}

TEST(Pipeline, SerializedReadersGiveSameResult) {
    TempDir tmp("serial");
    const auto h = oracle::random_hermitian(77, 9);
    write_striped(h, tmp.path(), 5);
    const auto a = assemble_from_files(tmp.path(), 9, {false});
    const auto b = assemble_from_files(tmp.path(), 9, {true});
    EXPECT_EQ(a.blocked.blocks, b.blocked.blocks);
    EXPECT_EQ(a.completion_log.bytes, b.completion_log.bytes);
    EXPECT_EQ(a.completion_log.messages, b.completion_log.messages);
    EXPECT_EQ(gather_blocked(b.blocked), h);
}

TEST(Pipeline, RepeatedRunsBitwiseIdentical) {
    TempDir tmp("repeat");
    const auto h = oracle::random_hermitian(45, 10);
    write_striped(h, tmp.path(), 3);
    const auto ref = assemble_from_files(tmp.path(), 16).blocked.blocks;
    for (int rep = 0; rep < 5; ++rep) EXPECT_EQ(assemble_from_files(tmp.path(), 16).blocked.blocks, ref);
}
