#pragma once

// Striped matrix files and the two-phase parallel assembly:
//
//   write_striped                 lower-triangle rows, split over several files
//   read_striped_concurrent       one reader thread per logical rank
//   hermitian_complete            upper triangle filled by rank-to-rank messages
//   redistribute_striped_to_blocked  rows -> square-grid 2D blocks
//   gather_blocked                verification path back to one matrix
//
// Logical ranks are threads of this process; messages travel through
// blocking per-rank mailboxes and are applied in sender order.
//
// File layout (little endian):
//   magic "BSEMAT01" | u32 version | u64 n | u64 row_start | u64 row_count |
//   for each row r: (r+1) x (f64 re, f64 im) for columns 0..r

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <exception>
#include <functional>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "bsechase/errors.hpp"
#include "bsechase/linalg.hpp"

namespace bsechase::io {

namespace fs = std::filesystem;

inline constexpr std::array<char, 8> kMagic{'B', 'S', 'E', 'M', 'A', 'T', '0', '1'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 8 + 4 + 8 + 8 + 8;
inline constexpr std::size_t kEntryBytes = 16;

struct RowRange {
    std::size_t start = 0;
    std::size_t count = 0;
    std::size_t end() const noexcept { return start + count; }
    bool contains(std::size_t r) const noexcept { return r >= start && r < end(); }
    friend bool operator==(const RowRange&, const RowRange&) = default;
};

/// Splits [0, n) into `parts` contiguous ranges; the first n % parts ranges get one extra row.
inline std::vector<RowRange> balanced_ranges(std::size_t n, std::size_t parts) {
    if (parts == 0) throw LayoutError("balanced_ranges: zero parts");
    std::vector<RowRange> out(parts);
    const std::size_t base = n / parts, extra = n % parts;
    std::size_t at = 0;
    for (std::size_t k = 0; k < parts; ++k) {
        out[k] = {at, base + (k < extra ? 1 : 0)};
        at += out[k].count;
    }
    return out;
}

/// Number of stored entries for rows [start, start+count) of the lower triangle.
inline std::size_t lower_entries(const RowRange& r) {
    // sum_{i=start}^{end-1} (i+1)
    return r.count * (2 * r.start + r.count + 1) / 2;
}

struct StripedFileHeader {
    std::array<char, 8> magic = kMagic;
    std::uint32_t version = kVersion;
    std::uint64_t n = 0;
    std::uint64_t row_start = 0;
    std::uint64_t row_count = 0;

    std::size_t payload_bytes() const {
        return lower_entries({static_cast<std::size_t>(row_start), static_cast<std::size_t>(row_count)}) * kEntryBytes;
    }
    friend bool operator==(const StripedFileHeader&, const StripedFileHeader&) = default;
};

struct GridBlock {
    RowRange rows;
    RowRange cols;
};

/// Logical-rank decomposition: contiguous row stripes for every rank and, for
/// a perfect-square rank count, a sqrt(R) x sqrt(R) grid of 2D blocks. Grid
/// rank (pr, pc) has id pr * q + pc.
struct RankLayout {
    std::size_t n = 0;
    std::size_t ranks = 1;
    std::vector<RowRange> striped;
    std::size_t grid_side = 0;  // 0 when ranks is not a perfect square
    std::vector<GridBlock> grid;

    static RankLayout make(std::size_t n, std::size_t ranks) {
        if (n == 0) throw LayoutError("rank layout: matrix order must be positive");
        if (ranks == 0) throw LayoutError("rank layout: need at least one rank");
        RankLayout l;
        l.n = n;
        l.ranks = ranks;
        l.striped = balanced_ranges(n, ranks);
        std::size_t q = 0;
        while ((q + 1) * (q + 1) <= ranks) ++q;
        if (q * q == ranks) {
            l.grid_side = q;
            const auto blocks = balanced_ranges(n, q);
            for (std::size_t pr = 0; pr < q; ++pr)
                for (std::size_t pc = 0; pc < q; ++pc) l.grid.push_back({blocks[pr], blocks[pc]});
        }
        return l;
    }

    bool has_grid() const noexcept { return grid_side > 0; }

    std::size_t owner_of_row(std::size_t r) const {
        for (std::size_t k = 0; k < ranks; ++k)
            if (striped[k].contains(r)) return k;
        throw LayoutError("rank layout: row " + std::to_string(r) + " has no owner");
    }
};

struct TransferLog {
    std::uint64_t messages = 0;
    std::uint64_t bytes = 0;
    double max_single_reader_seconds = 0.0;
    double completion_seconds = 0.0;
};

/// Lower-triangle rows held by each rank: rank k stores rows of layout.striped[k]
/// back to back, row r contributing r+1 entries.
struct StripedBuffers {
    RankLayout layout;
    std::vector<std::vector<Complex>> lower;

    Complex at(std::size_t rank, std::size_t r, std::size_t c) const {
        const auto& rr = layout.striped[rank];
        return lower[rank][lower_entries({rr.start, r - rr.start}) + c];
    }
};

/// Full rows held by each rank, row-major, n entries per row.
struct FullStripes {
    RankLayout layout;
    std::vector<std::vector<Complex>> rows;
};

/// One row-major 2D block per grid rank.
struct BlockedBuffers {
    RankLayout layout;
    std::vector<std::vector<Complex>> blocks;
};

struct Manifest {
    std::size_t n = 0;
    std::size_t num_files = 0;
    std::vector<RowRange> ranges;
    std::uint64_t checksum = 0;
};

struct ReadOptions {
    bool serialize_readers = false;
};

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * b)) & 0xff));
}

inline void put_f64(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

template <class T>
T get_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
    return static_cast<T>(v);
}

inline double get_f64(const unsigned char* p) { return std::bit_cast<double>(get_le<std::uint64_t>(p)); }

inline std::string encode_header(const StripedFileHeader& h) {
    std::string out(h.magic.begin(), h.magic.end());
    put_le(out, h.version);
    put_le(out, h.n);
    put_le(out, h.row_start);
    put_le(out, h.row_count);
    return out;
}

inline StripedFileHeader decode_header(const unsigned char* p) {
    StripedFileHeader h;
    std::memcpy(h.magic.data(), p, 8);
    h.version = get_le<std::uint32_t>(p + 8);
    h.n = get_le<std::uint64_t>(p + 12);
    h.row_start = get_le<std::uint64_t>(p + 20);
    h.row_count = get_le<std::uint64_t>(p + 28);
    return h;
}

class Fnv1a {
public:
    void update(const char* p, std::size_t len) {
        for (std::size_t i = 0; i < len; ++i) {
            h_ ^= static_cast<unsigned char>(p[i]);
            h_ *= 0x100000001b3ULL;
        }
    }
    std::uint64_t value() const noexcept { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline void encode_row(std::string& out, std::span<const Complex> lower_row) {
    for (const auto& z : lower_row) {
        put_f64(out, z.real());
        put_f64(out, z.imag());
    }
}

inline std::string part_name(std::size_t k) { return "part_" + std::to_string(k) + ".bsem"; }

}  // namespace detail

/// Checksum of the lower triangle in file byte order (FNV-1a, 64 bit).
inline std::uint64_t lower_triangle_checksum(const DenseHermitian& h) {
    detail::Fnv1a f;
    std::string buf;
    for (std::size_t r = 0; r < h.n(); ++r) {
        buf.clear();
        detail::encode_row(buf, h.row(r).first(r + 1));
        f.update(buf.data(), buf.size());
    }
    return f.value();
}

// ---------------------------------------------------------------------------
// Writing
// ---------------------------------------------------------------------------

/// Row generator: fills `out` (length r+1) with entries (r, 0..r).
using RowGenerator = std::function<void(std::size_t r, std::span<Complex> out)>;

inline std::vector<StripedFileHeader> write_striped(std::size_t n, const RowGenerator& gen, const fs::path& dir,
                                                    std::size_t num_files) {
    if (num_files == 0) throw PreconditionError("write_striped: num_files must be at least 1");
    if (n == 0) throw PreconditionError("write_striped: empty matrix");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory", dir.string());

    const auto ranges = balanced_ranges(n, num_files);
    std::vector<StripedFileHeader> headers;
    detail::Fnv1a checksum;
    std::vector<Complex> row(n);
    std::string buf;
    for (std::size_t k = 0; k < num_files; ++k) {
        StripedFileHeader hdr;
        hdr.n = n;
        hdr.row_start = ranges[k].start;
        hdr.row_count = ranges[k].count;
        const auto path = dir / detail::part_name(k);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing", path.string());
        const auto head = detail::encode_header(hdr);
        out.write(head.data(), static_cast<std::streamsize>(head.size()));
        for (std::size_t r = ranges[k].start; r < ranges[k].end(); ++r) {
            auto lower = std::span<Complex>(row).first(r + 1);
            gen(r, lower);
            buf.clear();
            detail::encode_row(buf, lower);
            checksum.update(buf.data(), buf.size());
            out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        }
        out.flush();
        if (!out) throw IoError("write failed", path.string());
        headers.push_back(hdr);
    }

    const auto mpath = dir / "manifest.txt";
    std::ofstream m(mpath, std::ios::trunc);
    if (!m) throw IoError("cannot open for writing", mpath.string());
    m << "n " << n << "\n" << "num_files " << num_files << "\n";
    for (std::size_t k = 0; k < num_files; ++k)
        m << "file " << detail::part_name(k) << " " << ranges[k].start << " " << ranges[k].count << "\n";
    m << "checksum " << std::hex << std::setw(16) << std::setfill('0') << checksum.value() << "\n";
    if (!m) throw IoError("write failed", mpath.string());
    return headers;
}

inline std::vector<StripedFileHeader> write_striped(const DenseHermitian& h, const fs::path& dir, std::size_t num_files) {
    return write_striped(
        h.n(), [&](std::size_t r, std::span<Complex> out) { std::copy_n(h.row(r).begin(), r + 1, out.begin()); }, dir,
        num_files);
}

inline Manifest read_manifest(const fs::path& dir) {
    const auto path = dir / "manifest.txt";
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest", path.string());
    Manifest m;
    std::string key;
    bool have_n = false, have_sum = false;
    while (in >> key) {
        if (key == "n") {
            in >> m.n;
            have_n = true;
        } else if (key == "num_files") {
            in >> m.num_files;
        } else if (key == "file") {
            std::string name;
            RowRange r;
            in >> name >> r.start >> r.count;
            m.ranges.push_back(r);
        } else if (key == "checksum") {
            std::string hex;
            in >> hex;
            m.checksum = std::stoull(hex, nullptr, 16);
            have_sum = true;
        } else {
            throw FormatError("manifest: unknown key '" + key + "' in " + path.string());
        }
        if (!in) throw FormatError("manifest: malformed line in " + path.string());
    }
    if (!have_n || !have_sum || m.ranges.size() != m.num_files) throw FormatError("manifest: incomplete " + path.string());
    return m;
}

// ---------------------------------------------------------------------------
// Concurrent reading
// ---------------------------------------------------------------------------

namespace detail {

inline StripedFileHeader read_header(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open striped file", path.string());
    unsigned char buf[kHeaderBytes];
    in.read(reinterpret_cast<char*>(buf), kHeaderBytes);
    if (in.gcount() != static_cast<std::streamsize>(kHeaderBytes)) throw FormatError("truncated header: " + path.string());
    auto h = decode_header(buf);
    if (h.magic != kMagic) throw FormatError("bad magic: " + path.string());
    if (h.version != kVersion) throw FormatError("unsupported version " + std::to_string(h.version) + ": " + path.string());
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    if (ec || size != kHeaderBytes + h.payload_bytes()) throw FormatError("payload length mismatch: " + path.string());
    return h;
}

inline void run_ranks(std::size_t ranks, const std::function<void(std::size_t)>& body) {
    std::vector<std::exception_ptr> errors(ranks);
    std::vector<std::thread> threads;
    threads.reserve(ranks);
    for (std::size_t k = 0; k < ranks; ++k)
        threads.emplace_back([&, k] {
            try {
                body(k);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        });
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Every logical rank opens the files overlapping its stripe and reads only
/// the rows it owns. File row ranges need not line up with the stripes.
inline std::pair<StripedBuffers, TransferLog> read_striped_concurrent(const fs::path& dir, const RankLayout& layout,
                                                                      ReadOptions opts = {}) {
    const auto manifest = read_manifest(dir);
    if (manifest.n != layout.n)
        throw LayoutError("read_striped_concurrent: files hold n = " + std::to_string(manifest.n) + ", layout expects " +
                          std::to_string(layout.n));

    struct FileInfo {
        fs::path path;
        StripedFileHeader header;
    };
    std::vector<FileInfo> files;
    for (std::size_t k = 0; k < manifest.num_files; ++k) {
        auto path = dir / detail::part_name(k);
        auto hdr = detail::read_header(path);
        if (hdr.n != manifest.n) throw FormatError("matrix order differs from manifest: " + path.string());
        files.push_back({std::move(path), hdr});
    }
    auto sorted = files;
    std::sort(sorted.begin(), sorted.end(),
              [](const FileInfo& a, const FileInfo& b) { return a.header.row_start < b.header.row_start; });
    std::uint64_t covered = 0;
    for (const auto& f : sorted) {
        if (f.header.row_start != covered)
            throw LayoutError(f.header.row_start < covered ? "overlapping row ranges at row " + std::to_string(f.header.row_start)
                                                           : "missing rows from " + std::to_string(covered));
        covered += f.header.row_count;
    }
    if (covered != manifest.n) throw LayoutError("missing rows from " + std::to_string(covered));

    StripedBuffers buffers{layout, std::vector<std::vector<Complex>>(layout.ranks)};
    std::vector<double> seconds(layout.ranks, 0.0);
    std::mutex serial;

    detail::run_ranks(layout.ranks, [&](std::size_t rank) {
        std::unique_lock<std::mutex> hold(serial, std::defer_lock);
        if (opts.serialize_readers) hold.lock();
        const auto t0 = std::chrono::steady_clock::now();
        const auto mine = layout.striped[rank];
        auto& dest = buffers.lower[rank];
        dest.resize(lower_entries(mine));
        std::vector<unsigned char> raw;
        for (const auto& f : sorted) {
            const RowRange fr{static_cast<std::size_t>(f.header.row_start), static_cast<std::size_t>(f.header.row_count)};
            const std::size_t lo = std::max(fr.start, mine.start);
            const std::size_t hi = std::min(fr.end(), mine.end());
            if (lo >= hi) continue;
            std::ifstream in(f.path, std::ios::binary);
            if (!in) throw IoError("cannot open striped file", f.path.string());
            const std::size_t skip = lower_entries({fr.start, lo - fr.start});
            const std::size_t count = lower_entries({lo, hi - lo});
            in.seekg(static_cast<std::streamoff>(kHeaderBytes + skip * kEntryBytes));
            raw.resize(count * kEntryBytes);
            in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
            if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw FormatError("truncated payload: " + f.path.string());
            const std::size_t offset = lower_entries({mine.start, lo - mine.start});
            for (std::size_t e = 0; e < count; ++e)
                dest[offset + e] = {detail::get_f64(&raw[e * kEntryBytes]), detail::get_f64(&raw[e * kEntryBytes + 8])};
        }
        seconds[rank] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });

    TransferLog log;
    log.max_single_reader_seconds = *std::max_element(seconds.begin(), seconds.end());
    return {std::move(buffers), log};
}

// ---------------------------------------------------------------------------
// Message passing between logical ranks
// ---------------------------------------------------------------------------

struct Message {
    std::size_t sender = 0;
    std::vector<Complex> payload;
};

/// Blocking one-to-one channels, one inbox per rank.
class MessageBus {
public:
    explicit MessageBus(std::size_t ranks) : boxes_(ranks) {}

    void send(std::size_t from, std::size_t to, std::vector<Complex> payload) {
        auto& box = boxes_.at(to);
        {
            std::lock_guard<std::mutex> lock(box.mutex);
            box.queue.push_back({from, std::move(payload)});
        }
        box.cv.notify_one();
        std::lock_guard<std::mutex> lock(stats_mutex_);
        ++messages_;
    }

    Message receive(std::size_t rank) {
        auto& box = boxes_.at(rank);
        std::unique_lock<std::mutex> lock(box.mutex);
        box.cv.wait(lock, [&] { return !box.queue.empty(); });
        Message m = std::move(box.queue.front());
        box.queue.pop_front();
        return m;
    }

    /// Receives `expected` messages and returns them ordered by sender.
    std::vector<Message> receive_all(std::size_t rank, std::size_t expected) {
        std::vector<Message> got;
        got.reserve(expected);
        for (std::size_t k = 0; k < expected; ++k) got.push_back(receive(rank));
        std::sort(got.begin(), got.end(), [](const Message& a, const Message& b) { return a.sender < b.sender; });
        return got;
    }

    void account(std::size_t payload_entries) {
        std::lock_guard<std::mutex> lock(stats_mutex_);
        bytes_ += payload_entries * kEntryBytes;
    }

    std::uint64_t messages() const { return messages_; }
    std::uint64_t bytes() const { return bytes_; }

private:
    struct Box {
        std::mutex mutex;
        std::condition_variable cv;
        std::deque<Message> queue;
    };
    std::vector<Box> boxes_;
    std::mutex stats_mutex_;
    std::uint64_t messages_ = 0;
    std::uint64_t bytes_ = 0;
};

// ---------------------------------------------------------------------------
// Hermitian completion
// ---------------------------------------------------------------------------

/// Bytes the completion phase must move: every strict-upper entry (r, c)
/// whose rows r and c belong to different ranks.
inline std::uint64_t expected_completion_bytes(const RankLayout& layout) {
    std::uint64_t entries = 0;
    for (std::size_t a = 0; a < layout.ranks; ++a)
        for (std::size_t b = a + 1; b < layout.ranks; ++b) entries += static_cast<std::uint64_t>(layout.striped[a].count) * layout.striped[b].count;
    return entries * kEntryBytes;
}

/// Completes every stripe to full rows. Rank b sends rank a (a < b) the
/// entries H(c, r) for its rows c and the rows r of a; rank a stores their
/// conjugates at (r, c).
inline std::pair<FullStripes, TransferLog> hermitian_complete(const StripedBuffers& striped) {
    const auto& layout = striped.layout;
    const std::size_t n = layout.n;
    FullStripes full{layout, std::vector<std::vector<Complex>>(layout.ranks)};
    MessageBus bus(layout.ranks);
    const auto t0 = std::chrono::steady_clock::now();

    detail::run_ranks(layout.ranks, [&](std::size_t me) {
        const auto mine = layout.striped[me];
        auto& rows = full.rows[me];
        rows.assign(mine.count * n, Complex{});

        // Outgoing: to every lower rank with rows.
        for (std::size_t a = 0; a < me; ++a) {
            const auto theirs = layout.striped[a];
            if (theirs.count == 0 || mine.count == 0) continue;
            std::vector<Complex> payload;
            payload.reserve(theirs.count * mine.count);
            for (std::size_t c = mine.start; c < mine.end(); ++c)
                for (std::size_t r = theirs.start; r < theirs.end(); ++r) payload.push_back(striped.at(me, c, r));
            bus.account(payload.size());
            bus.send(me, a, std::move(payload));
        }

        // Local lower triangle and the locally available part of the upper triangle.
        for (std::size_t r = mine.start; r < mine.end(); ++r) {
            auto* row = rows.data() + (r - mine.start) * n;
            for (std::size_t c = 0; c <= r; ++c) row[c] = striped.at(me, r, c);
            for (std::size_t c = r + 1; c < mine.end(); ++c) row[c] = std::conj(striped.at(me, c, r));
        }

        // Incoming: from every higher rank with rows.
        std::size_t expected = 0;
        if (mine.count > 0)
            for (std::size_t b = me + 1; b < layout.ranks; ++b) expected += layout.striped[b].count > 0 ? 1 : 0;
        for (const auto& msg : bus.receive_all(me, expected)) {
            const auto src = layout.striped[msg.sender];
            std::size_t k = 0;
            for (std::size_t c = src.start; c < src.end(); ++c)
                for (std::size_t r = mine.start; r < mine.end(); ++r) rows[(r - mine.start) * n + c] = std::conj(msg.payload[k++]);
        }
    });

    TransferLog log;
    log.messages = bus.messages();
    log.bytes = bus.bytes();
    log.completion_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(full), log};
}

// ---------------------------------------------------------------------------
// Striped -> blocked
// ---------------------------------------------------------------------------

/// Out-of-place move of full rows into the 2D grid blocks. Each stripe owner
/// sends every grid rank the intersection of its rows with that rank's block.
inline std::pair<BlockedBuffers, TransferLog> redistribute_striped_to_blocked(const FullStripes& stripes) {
    const auto& layout = stripes.layout;
    if (!layout.has_grid())
        throw LayoutError("redistribute: " + std::to_string(layout.ranks) + " ranks do not form a square grid");
    const std::size_t n = layout.n;
    BlockedBuffers out{layout, std::vector<std::vector<Complex>>(layout.ranks)};
    MessageBus bus(layout.ranks);
    const auto t0 = std::chrono::steady_clock::now();

    auto overlap = [](const RowRange& a, const RowRange& b) {
        const std::size_t lo = std::max(a.start, b.start), hi = std::min(a.end(), b.end());
        return lo < hi ? RowRange{lo, hi - lo} : RowRange{lo, 0};
    };

    detail::run_ranks(layout.ranks, [&](std::size_t me) {
        const auto mine = layout.striped[me];
        const auto& src_rows = stripes.rows[me];
        const auto my_block = layout.grid[me];
        auto& block = out.blocks[me];
        block.assign(my_block.rows.count * my_block.cols.count, Complex{});

        for (std::size_t d = 0; d < layout.ranks; ++d) {
            const auto blk = layout.grid[d];
            const auto ov = overlap(mine, blk.rows);
            if (ov.count == 0 || blk.cols.count == 0) continue;
            std::vector<Complex> payload;
            payload.reserve(ov.count * blk.cols.count);
            for (std::size_t r = ov.start; r < ov.end(); ++r) {
                const auto* row = src_rows.data() + (r - mine.start) * n;
                payload.insert(payload.end(), row + blk.cols.start, row + blk.cols.end());
            }
            if (d == me) {
                for (std::size_t r = ov.start, k = 0; r < ov.end(); ++r)
                    for (std::size_t c = 0; c < blk.cols.count; ++c) block[(r - blk.rows.start) * blk.cols.count + c] = payload[k++];
            } else {
                bus.account(payload.size());
                bus.send(me, d, std::move(payload));
            }
        }

        std::size_t expected = 0;
        if (my_block.cols.count > 0)
            for (std::size_t s = 0; s < layout.ranks; ++s)
                if (s != me && overlap(layout.striped[s], my_block.rows).count > 0) ++expected;
        for (const auto& msg : bus.receive_all(me, expected)) {
            const auto ov = overlap(layout.striped[msg.sender], my_block.rows);
            std::size_t k = 0;
            for (std::size_t r = ov.start; r < ov.end(); ++r)
                for (std::size_t c = 0; c < my_block.cols.count; ++c)
                    block[(r - my_block.rows.start) * my_block.cols.count + c] = msg.payload[k++];
        }
    });

    TransferLog log;
    log.messages = bus.messages();
    log.bytes = bus.bytes();
    log.completion_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(out), log};
}

// ---------------------------------------------------------------------------
// Verification path
// ---------------------------------------------------------------------------

/// Reassembles the grid blocks. The lower triangle defines the result; the
/// upper triangle must be its exact conjugate transpose.
inline DenseHermitian gather_blocked(const BlockedBuffers& blocked) {
    const auto& layout = blocked.layout;
    if (!layout.has_grid()) throw LayoutError("gather_blocked: layout has no grid");
    if (blocked.blocks.size() != layout.ranks) throw LayoutError("gather_blocked: block count does not match rank count");
    const std::size_t n = layout.n;
    std::vector<Complex> full(n * n);
    for (std::size_t k = 0; k < layout.ranks; ++k) {
        const auto blk = layout.grid[k];
        const auto& data = blocked.blocks[k];
        if (data.size() != blk.rows.count * blk.cols.count)
            throw LayoutError("gather_blocked: block of rank " + std::to_string(k) + " is missing or has the wrong size");
        for (std::size_t r = 0; r < blk.rows.count; ++r)
            for (std::size_t c = 0; c < blk.cols.count; ++c)
                full[(blk.rows.start + r) * n + blk.cols.start + c] = data[r * blk.cols.count + c];
    }
    return DenseHermitian::from_row_major(n, full, 0.0);
}

struct VerifyReport {
    bool checksum_ok = false;
    bool hermitian_ok = false;
    std::uint64_t expected_checksum = 0;
    std::uint64_t actual_checksum = 0;
    bool ok() const noexcept { return checksum_ok && hermitian_ok; }
};

/// Compares the gathered blocks with the checksum recorded at write time.
inline VerifyReport verify_blocked(const BlockedBuffers& blocked, std::uint64_t expected_checksum) {
    VerifyReport rep;
    rep.expected_checksum = expected_checksum;
    try {
        const auto h = gather_blocked(blocked);
        rep.hermitian_ok = true;
        rep.actual_checksum = lower_triangle_checksum(h);
    } catch (const NotHermitianError&) {
        // Checksum of the lower triangle is still meaningful.
        const auto& layout = blocked.layout;
        const std::size_t n = layout.n;
        DenseHermitian h(n);
        for (std::size_t k = 0; k < layout.ranks; ++k) {
            const auto blk = layout.grid[k];
            for (std::size_t r = 0; r < blk.rows.count; ++r)
                for (std::size_t c = 0; c < blk.cols.count; ++c) {
                    const std::size_t gr = blk.rows.start + r, gc = blk.cols.start + c;
                    if (gc <= gr) h.set(gr, gc, blocked.blocks[k][r * blk.cols.count + c]);
                }
        }
        rep.actual_checksum = lower_triangle_checksum(h);
    }
    rep.checksum_ok = rep.actual_checksum == expected_checksum;
    return rep;
}

// ---------------------------------------------------------------------------
// Whole pipeline
// ---------------------------------------------------------------------------

struct AssemblyTimings {
    double read = 0.0;
    double complete = 0.0;
    double redistribute = 0.0;
};

struct AssemblyResult {
    BlockedBuffers blocked;
    TransferLog read_log;
    TransferLog completion_log;
    TransferLog redistribution_log;
    AssemblyTimings seconds;
};

/// read -> complete -> redistribute from a directory of striped files.
inline AssemblyResult assemble_from_files(const fs::path& dir, std::size_t ranks, ReadOptions opts = {}) {
    const auto manifest = read_manifest(dir);
    const auto layout = RankLayout::make(manifest.n, ranks);
    if (!layout.has_grid()) throw LayoutError("assemble: " + std::to_string(ranks) + " ranks do not form a square grid");
    auto clock = [] { return std::chrono::steady_clock::now(); };
    AssemblyResult res;
    auto t0 = clock();
    auto [striped, rlog] = read_striped_concurrent(dir, layout, opts);
    auto t1 = clock();
    auto [full, clog] = hermitian_complete(striped);
    auto t2 = clock();
    auto [blocked, dlog] = redistribute_striped_to_blocked(full);
    auto t3 = clock();
    res.blocked = std::move(blocked);
    res.read_log = rlog;
    res.completion_log = clog;
    res.redistribution_log = dlog;
    res.seconds = {std::chrono::duration<double>(t1 - t0).count(), std::chrono::duration<double>(t2 - t1).count(),
                   std::chrono::duration<double>(t3 - t2).count()};
    return res;
}

}  // namespace bsechase::io
