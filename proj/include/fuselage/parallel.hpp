#ifndef FUSELAGE_PARALLEL_HPP
#define FUSELAGE_PARALLEL_HPP

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace fuselage {

// Work is always split into a fixed number of chunks that depends only on
// the problem size, never on the worker count. Workers pull chunks by
// atomic-free striding; any reduction over per-chunk partials must be
// summed in chunk-index order by the caller. This is what makes results
// bit-identical for --workers 1 vs 8.
constexpr std::size_t kChunksPerJob = 64;

inline std::size_t chunk_count(std::size_t n_items) {
    if (n_items == 0)
        return 0;
    return n_items < kChunksPerJob ? n_items : kChunksPerJob;
}

// fn(chunk_index, begin, end) over [0, n_items)
template <typename Fn>
void parallel_chunks(std::size_t n_items, int workers, Fn&& fn) {
    const std::size_t nchunks = chunk_count(n_items);
    if (nchunks == 0)
        return;
    auto run_chunk = [&](std::size_t c) {
        const std::size_t begin = n_items * c / nchunks;
        const std::size_t end = n_items * (c + 1) / nchunks;
        fn(c, begin, end);
    };
    if (workers <= 1 || nchunks == 1) {
        for (std::size_t c = 0; c < nchunks; ++c)
            run_chunk(c);
        return;
    }
    const std::size_t nthreads = std::min<std::size_t>(workers, nchunks);
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (std::size_t t = 0; t < nthreads; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t c = t; c < nchunks; c += nthreads)
                run_chunk(c);
        });
    }
    for (auto& th : pool)
        th.join();
}

// Compensated accumulator; keeps monotonicity checks on the free-energy
// trace meaningful at the 1e-9 level on ~1e5-magnitude sums.
struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double v) {
        const double y = v - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    void merge(const KahanSum& o) {
        add(o.sum);
        add(-o.carry);
    }
    double value() const { return sum; }
};

} // namespace fuselage

#endif
