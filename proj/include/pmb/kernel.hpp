#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "pmb/grid.hpp"
#include "pmb/random.hpp"

namespace pmb {

/// Sparse single-step transition map between grid cells, survival folded in:
/// each row sums to survival * (fraction of samples staying on the grid).
/// Stored CSR over source cells with destinations sorted per row.
struct TransitionKernel {
    std::uint32_t cells = 0;
    std::vector<std::uint64_t> row_offset; // cells + 1
    std::vector<std::uint32_t> dest;
    std::vector<double> prob;

    [[nodiscard]] double row_mass(std::uint32_t c) const {
        double s = 0.0;
        for (std::uint64_t k = row_offset[c]; k < row_offset[c + 1]; ++k) s += prob[k];
        return s;
    }

    /// Mass flowing INTO each cell when the source density is uniform 1.
    [[nodiscard]] std::vector<double> column_mass() const {
        std::vector<double> col(cells, 0.0);
        for (std::uint32_t c = 0; c < cells; ++c)
            for (std::uint64_t k = row_offset[c]; k < row_offset[c + 1]; ++k)
                col[dest[k]] += prob[k];
        return col;
    }

    /// Diagonal kernel: every cell maps to itself with the given mass.
    static TransitionKernel identity(std::uint32_t cells, double mass = 1.0) {
        TransitionKernel k;
        k.cells = cells;
        k.row_offset.resize(cells + 1);
        k.dest.resize(cells);
        k.prob.assign(cells, mass);
        for (std::uint32_t c = 0; c < cells; ++c) {
            k.row_offset[c] = c;
            k.dest[c] = c;
        }
        k.row_offset[cells] = cells;
        return k;
    }
};

/// out[dest] += prob * in[src]; valid for densities because all cells share
/// one hypervolume.
inline std::vector<double> apply_kernel(const TransitionKernel& k, std::span<const double> in) {
    require(in.size() == k.cells, "apply_kernel: size mismatch");
    std::vector<double> out(k.cells, 0.0);
    for (std::uint32_t c = 0; c < k.cells; ++c) {
        const double v = in[c];
        if (v == 0.0) continue;
        for (std::uint64_t e = k.row_offset[c]; e < k.row_offset[c + 1]; ++e)
            out[k.dest[e]] += k.prob[e] * v;
    }
    return out;
}

namespace detail {

/// One propagated sample: uniform start within the source cell, linear
/// motion plus process noise, then binned. Position departures leave the
/// grid (mass loss); velocities clamp to the nearest velocity cell.
inline int propagate_sample(const GridSpec& spec, const GridSpec::Cell& c, double timestep,
                            double noise_l00, double noise_l10, double noise_l11, Rng& rng) {
    const double px = spec.pos.center(c.ix) + spec.pos.spacing * (rng.uniform() - 0.5);
    const double py = spec.pos.center(c.iy) + spec.pos.spacing * (rng.uniform() - 0.5);
    const double vx = spec.vel.center(c.ivx) + spec.vel.spacing * (rng.uniform() - 0.5);
    const double vy = spec.vel.center(c.ivy) + spec.vel.spacing * (rng.uniform() - 0.5);

    const double nx1 = rng.normal(), nx2 = rng.normal();
    const double ny1 = rng.normal(), ny2 = rng.normal();

    const double px2 = px + vx * timestep + noise_l00 * nx1;
    const double vx2 = vx + noise_l10 * nx1 + noise_l11 * nx2;
    const double py2 = py + vy * timestep + noise_l00 * ny1;
    const double vy2 = vy + noise_l10 * ny1 + noise_l11 * ny2;

    const int ix = spec.pos.index_of(px2);
    const int iy = spec.pos.index_of(py2);
    if (ix < 0 || iy < 0) return -1;
    return static_cast<int>(
        spec.index(ix, iy, spec.vel.clamped_index(vx2), spec.vel.clamped_index(vy2)));
}

} // namespace detail

/// Estimates the transition kernel by simulating `samples_per_cell` draws
/// from every cell. Each cell uses its own generator stream derived from
/// (seed, cell), so the result is independent of thread scheduling and
/// bit-reproducible for a fixed seed.
inline TransitionKernel build_kernel_monte_carlo(const GridSpec& spec, const CvDynamics& dyn,
                                                 double survival, int samples_per_cell,
                                                 std::uint64_t seed, int threads = 0) {
    require(samples_per_cell >= 1, "build_kernel_monte_carlo: samples_per_cell >= 1");
    require(survival >= 0.0 && survival <= 1.0, "build_kernel_monte_carlo: survival in [0,1]");
    const std::uint32_t cells = spec.num_cells();
    const double t = dyn.timestep;
    const double q = dyn.diffusion;
    // Cholesky factor of the per-axis noise block q*[[t^3/3, t^2/2],[t^2/2, t]].
    const double l00 = std::sqrt(q * t * t * t / 3.0);
    const double l10 = (q * t * t / 2.0) / l00;
    const double l11 = std::sqrt(q * t - l10 * l10);

    std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(cells);
    auto work = [&](std::uint32_t begin, std::uint32_t end) {
        std::vector<std::uint32_t> hits;
        hits.reserve(samples_per_cell);
        for (std::uint32_t c = begin; c < end; ++c) {
            Rng rng(seed, c);
            const GridSpec::Cell cell = spec.decompose(c);
            hits.clear();
            for (int s = 0; s < samples_per_cell; ++s) {
                const int d = detail::propagate_sample(spec, cell, t, l00, l10, l11, rng);
                if (d >= 0) hits.push_back(static_cast<std::uint32_t>(d));
            }
            std::sort(hits.begin(), hits.end());
            auto& row = rows[c];
            for (std::size_t i = 0; i < hits.size();) {
                std::size_t j = i;
                while (j < hits.size() && hits[j] == hits[i]) ++j;
                row.emplace_back(hits[i], survival * static_cast<double>(j - i) /
                                              static_cast<double>(samples_per_cell));
                i = j;
            }
        }
    };

    unsigned n_threads = threads > 0 ? static_cast<unsigned>(threads)
                                     : std::max(1u, std::thread::hardware_concurrency());
    n_threads = std::min<unsigned>(n_threads, cells);
    if (n_threads <= 1) {
        work(0, cells);
    } else {
        std::vector<std::thread> pool;
        const std::uint32_t chunk = (cells + n_threads - 1) / n_threads;
        for (unsigned i = 0; i < n_threads; ++i) {
            const std::uint32_t begin = i * chunk;
            const std::uint32_t end = std::min(cells, begin + chunk);
            if (begin < end) pool.emplace_back(work, begin, end);
        }
        for (auto& th : pool) th.join();
    }

    TransitionKernel k;
    k.cells = cells;
    k.row_offset.resize(cells + 1, 0);
    std::uint64_t nnz = 0;
    for (std::uint32_t c = 0; c < cells; ++c) {
        k.row_offset[c] = nnz;
        nnz += rows[c].size();
    }
    k.row_offset[cells] = nnz;
    k.dest.resize(nnz);
    k.prob.resize(nnz);
    for (std::uint32_t c = 0; c < cells; ++c) {
        std::uint64_t e = k.row_offset[c];
        for (const auto& [d, p] : rows[c]) {
            k.dest[e] = d;
            k.prob[e] = p;
            ++e;
        }
    }
    return k;
}

/// Everything the cached kernel depends on.
struct KernelKey {
    GridSpec spec;
    double timestep = 1.0;
    double diffusion = 0.01;
    double survival = 0.999;
    int samples = 1000;
    std::uint64_t seed = 1;

    [[nodiscard]] std::uint64_t hash() const {
        auto mix = [](std::uint64_t h, std::uint64_t v) {
            h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
            return h;
        };
        auto bits = [](double d) {
            std::uint64_t u;
            static_assert(sizeof(u) == sizeof(d));
            std::memcpy(&u, &d, sizeof(u));
            return u;
        };
        std::uint64_t h = 0x706d626b65726eull;
        for (double d : {spec.pos.first, spec.pos.spacing, spec.vel.first, spec.vel.spacing,
                         timestep, diffusion, survival})
            h = mix(h, bits(d));
        h = mix(h, static_cast<std::uint64_t>(spec.pos.count));
        h = mix(h, static_cast<std::uint64_t>(spec.vel.count));
        h = mix(h, static_cast<std::uint64_t>(samples));
        h = mix(h, seed);
        return h;
    }

    [[nodiscard]] bool operator==(const KernelKey& o) const {
        return spec == o.spec && timestep == o.timestep && diffusion == o.diffusion &&
               survival == o.survival && samples == o.samples && seed == o.seed;
    }
};

namespace detail {

inline constexpr std::uint64_t kKernelFileMagic = 0x314e524b424d50ull; // "PMBKRN1"

template <typename T>
bool write_pod(std::FILE* f, const T& v) {
    return std::fwrite(&v, sizeof(T), 1, f) == 1;
}

template <typename T>
bool read_pod(std::FILE* f, T& v) {
    return std::fread(&v, sizeof(T), 1, f) == 1;
}

} // namespace detail

inline bool save_kernel(const std::string& path, const KernelKey& key,
                        const TransitionKernel& k) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) return false;
    bool ok = detail::write_pod(f, detail::kKernelFileMagic) && detail::write_pod(f, key) &&
              detail::write_pod(f, k.cells);
    const std::uint64_t nnz = k.dest.size();
    ok = ok && detail::write_pod(f, nnz);
    ok = ok && std::fwrite(k.row_offset.data(), sizeof(std::uint64_t), k.row_offset.size(), f) ==
                   k.row_offset.size();
    ok = ok && std::fwrite(k.dest.data(), sizeof(std::uint32_t), nnz, f) == nnz;
    ok = ok && std::fwrite(k.prob.data(), sizeof(double), nnz, f) == nnz;
    std::fclose(f);
    return ok;
}

/// Loads a cached kernel; returns nullopt when the file is missing,
/// malformed, or was built from a different key.
inline std::optional<TransitionKernel> load_kernel(const std::string& path,
                                                   const KernelKey& expect) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) return std::nullopt;
    std::uint64_t magic = 0;
    KernelKey key;
    TransitionKernel k;
    std::uint64_t nnz = 0;
    bool ok = detail::read_pod(f, magic) && magic == detail::kKernelFileMagic &&
              detail::read_pod(f, key) && key == expect && detail::read_pod(f, k.cells) &&
              detail::read_pod(f, nnz);
    if (ok) {
        k.row_offset.resize(k.cells + 1);
        k.dest.resize(nnz);
        k.prob.resize(nnz);
        ok = std::fread(k.row_offset.data(), sizeof(std::uint64_t), k.row_offset.size(), f) ==
                 k.row_offset.size() &&
             std::fread(k.dest.data(), sizeof(std::uint32_t), nnz, f) == nnz &&
             std::fread(k.prob.data(), sizeof(double), nnz, f) == nnz;
    }
    std::fclose(f);
    if (!ok) return std::nullopt;
    return k;
}

} // namespace pmb
