#include "slotpi/synthdata.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "slotpi/errors.hpp"
#include "slotpi/rng.hpp"

namespace slotpi {

namespace {

constexpr std::size_t kSlotDim = 16;
constexpr char kMagic[8] = {'S', 'L', 'P', 'D', '0', '0', '0', '1'};

// Underdamped closed form; gamma = 0 is the exact harmonic oscillator.
// Shared by the spring and damped generators so the gamma -> 0 limit is
// bitwise exact.
void damped_state(double q0, double p0, double w, double gamma, double t, double& q, double& p) {
    const double wd = w * std::sqrt(1.0 - gamma * gamma);
    const double e = std::exp(-gamma * w * t);
    const double a = q0;
    const double b = (p0 + gamma * w * q0) / wd;
    const double c = std::cos(wd * t), s = std::sin(wd * t);
    q = e * (a * c + b * s);
    p = e * ((b * wd - gamma * w * a) * c - (a * wd + gamma * w * b) * s);
}

std::size_t slot_offset(const TrajectoryDataset& ds, std::size_t traj, std::size_t t) {
    return ((traj * ds.steps) + t) * ds.n_slots * ds.dim;
}

std::size_t obs_offset(const TrajectoryDataset& ds, std::size_t traj, std::size_t t) {
    return ((traj * ds.steps) + t) * ds.obs_h * ds.obs_w * ds.obs_c;
}

}  // namespace

Tensor TrajectoryDataset::slot_frame(std::size_t traj, std::size_t t) const {
    std::vector<double> d(n_slots * dim);
    const std::size_t off = slot_offset(*this, traj, t);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = double(slots[off + i]);
    return Tensor::constant(n_slots, dim, std::move(d));
}

Tensor TrajectoryDataset::obs_frame(std::size_t traj, std::size_t t) const {
    std::vector<double> d(obs_h * obs_w * obs_c);
    const std::size_t off = obs_offset(*this, traj, t);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = double(observations[off + i]);
    return Tensor::constant(obs_h, obs_w * obs_c, std::move(d));
}

std::vector<double> TrajectoryDataset::obs_frame_flat(std::size_t traj, std::size_t t) const {
    std::vector<double> d(obs_h * obs_w * obs_c);
    const std::size_t off = obs_offset(*this, traj, t);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = double(observations[off + i]);
    return d;
}

TrajectoryDataset gen_spring_mass(std::size_t num_traj, std::size_t steps, std::size_t n_bodies,
                                  double dt, std::uint64_t seed) {
    if (n_bodies < 1) throw ConfigError("gen_spring_mass: need at least one body");
    TrajectoryDataset ds;
    ds.num_traj = num_traj;
    ds.steps = steps;
    ds.n_slots = n_bodies;
    ds.dim = kSlotDim;
    ds.dt = dt;
    ds.system = "spring";
    ds.seed = seed;
    ds.slots.assign(num_traj * steps * n_bodies * kSlotDim, 0.0f);

    for (std::size_t traj = 0; traj < num_traj; ++traj) {
        Rng rng(seed ^ traj);
        std::vector<double> w(n_bodies), q0(n_bodies), p0(n_bodies);
        for (std::size_t i = 0; i < n_bodies; ++i) {
            w[i] = rng.uniform(0.5, 2.0);
            q0[i] = rng.uniform(-1.0, 1.0);
            p0[i] = rng.uniform(-1.0, 1.0);
        }
        for (std::size_t t = 0; t < steps; ++t) {
            const std::size_t off = slot_offset(ds, traj, t);
            for (std::size_t i = 0; i < n_bodies; ++i) {
                double q, p;
                damped_state(q0[i], p0[i], w[i], 0.0, double(t) * dt, q, p);
                ds.slots[off + i * kSlotDim + 0] = float(q);
                ds.slots[off + i * kSlotDim + 1] = float(p);
                ds.slots[off + i * kSlotDim + 2] = float(w[i]);
            }
        }
    }
    return ds;
}

TrajectoryDataset gen_damped_oscillator(std::size_t num_traj, std::size_t steps, double dt,
                                        double gamma, std::uint64_t seed) {
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw ConfigError("gen_damped_oscillator: gamma must be in [0,1) (underdamped)");
    TrajectoryDataset ds;
    ds.num_traj = num_traj;
    ds.steps = steps;
    ds.n_slots = 1;
    ds.dim = kSlotDim;
    ds.dt = dt;
    ds.system = "damped";
    ds.seed = seed;
    ds.slots.assign(num_traj * steps * kSlotDim, 0.0f);

    for (std::size_t traj = 0; traj < num_traj; ++traj) {
        Rng rng(seed ^ traj);
        const double w = rng.uniform(0.5, 2.0);
        const double q0 = rng.uniform(-1.0, 1.0);
        const double p0 = rng.uniform(-1.0, 1.0);
        for (std::size_t t = 0; t < steps; ++t) {
            const std::size_t off = slot_offset(ds, traj, t);
            double q, p;
            damped_state(q0, p0, w, gamma, double(t) * dt, q, p);
            ds.slots[off + 0] = float(q);
            ds.slots[off + 1] = float(p);
            ds.slots[off + 2] = float(w);
            ds.slots[off + 3] = float(gamma);
        }
    }
    return ds;
}

TrajectoryDataset gen_bouncing_balls(std::size_t num_traj, std::size_t steps, std::size_t n_balls,
                                     double dt, std::uint64_t seed) {
    if (n_balls < 2 || n_balls > 6) throw ConfigError("gen_bouncing_balls: n_balls must be in [2,6]");
    constexpr int kSubsteps = 10;
    TrajectoryDataset ds;
    ds.num_traj = num_traj;
    ds.steps = steps;
    ds.n_slots = n_balls;
    ds.dim = kSlotDim;
    ds.dt = dt;
    ds.system = "balls";
    ds.seed = seed;
    ds.slots.assign(num_traj * steps * n_balls * kSlotDim, 0.0f);

    for (std::size_t traj = 0; traj < num_traj; ++traj) {
        Rng rng(seed ^ traj);
        std::vector<double> x(n_balls), y(n_balls), vx(n_balls), vy(n_balls), r(n_balls);
        for (std::size_t i = 0; i < n_balls; ++i) {
            r[i] = rng.uniform(0.04, 0.08);
            // Rejection-sample non-overlapping starts.
            for (int attempt = 0; attempt < 1000; ++attempt) {
                x[i] = rng.uniform(r[i], 1.0 - r[i]);
                y[i] = rng.uniform(r[i], 1.0 - r[i]);
                bool ok = true;
                for (std::size_t j = 0; j < i; ++j) {
                    double dx = x[i] - x[j], dy = y[i] - y[j];
                    if (dx * dx + dy * dy < (r[i] + r[j]) * (r[i] + r[j])) ok = false;
                }
                if (ok) break;
            }
            vx[i] = rng.uniform(-0.5, 0.5);
            vy[i] = rng.uniform(-0.5, 0.5);
        }

        const double h = dt / kSubsteps;
        for (std::size_t t = 0; t < steps; ++t) {
            const std::size_t off = slot_offset(ds, traj, t);
            for (std::size_t i = 0; i < n_balls; ++i) {
                ds.slots[off + i * kSlotDim + 0] = float(x[i]);
                ds.slots[off + i * kSlotDim + 1] = float(y[i]);
                ds.slots[off + i * kSlotDim + 2] = float(vx[i]);
                ds.slots[off + i * kSlotDim + 3] = float(vy[i]);
                ds.slots[off + i * kSlotDim + 4] = float(r[i]);
            }
            for (int sub = 0; sub < kSubsteps; ++sub) {
                for (std::size_t i = 0; i < n_balls; ++i) {
                    x[i] += vx[i] * h;
                    y[i] += vy[i] * h;
                    // Wall reflection flips velocity only, |v| is unchanged.
                    if (x[i] - r[i] < 0.0) { x[i] = 2.0 * r[i] - x[i]; vx[i] = -vx[i]; }
                    if (x[i] + r[i] > 1.0) { x[i] = 2.0 * (1.0 - r[i]) - x[i]; vx[i] = -vx[i]; }
                    if (y[i] - r[i] < 0.0) { y[i] = 2.0 * r[i] - y[i]; vy[i] = -vy[i]; }
                    if (y[i] + r[i] > 1.0) { y[i] = 2.0 * (1.0 - r[i]) - y[i]; vy[i] = -vy[i]; }
                }
                // Equal-mass elastic collisions: exchange normal components.
                for (std::size_t i = 0; i < n_balls; ++i)
                    for (std::size_t j = i + 1; j < n_balls; ++j) {
                        double dx = x[j] - x[i], dy = y[j] - y[i];
                        double d2 = dx * dx + dy * dy;
                        double rs = r[i] + r[j];
                        if (d2 >= rs * rs || d2 == 0.0) continue;
                        double d = std::sqrt(d2);
                        double nx = dx / d, ny = dy / d;
                        double rel = (vx[i] - vx[j]) * nx + (vy[i] - vy[j]) * ny;
                        if (rel <= 0.0) continue;  // separating already
                        vx[i] -= rel * nx;
                        vy[i] -= rel * ny;
                        vx[j] += rel * nx;
                        vy[j] += rel * ny;
                        // Push apart to remove the overlap.
                        double push = 0.5 * (rs - d);
                        x[i] -= push * nx;
                        y[i] -= push * ny;
                        x[j] += push * nx;
                        y[j] += push * ny;
                    }
            }
        }
    }
    return ds;
}

TrajectoryDataset gen_diffusion2d(std::size_t num_traj, std::size_t steps, std::size_t h,
                                  std::size_t w, double dt, double nu, std::uint64_t seed) {
    if (h > 64 || w > 64) throw ConfigError("gen_diffusion2d: grid must be <= 64x64");
    if (nu * dt > 0.25) throw ConfigError("gen_diffusion2d: stability requires nu*dt <= 0.25");
    TrajectoryDataset ds;
    ds.num_traj = num_traj;
    ds.steps = steps;
    ds.n_slots = 0;
    ds.dim = 0;
    ds.obs_h = h;
    ds.obs_w = w;
    ds.obs_c = 1;
    ds.dt = dt;
    ds.system = "diffusion";
    ds.seed = seed;
    ds.observations.assign(num_traj * steps * h * w, 0.0f);

    for (std::size_t traj = 0; traj < num_traj; ++traj) {
        Rng rng(seed ^ traj);
        std::vector<double> u(h * w, 0.0), un(h * w);
        const int n_blobs = 3 + int(rng.raw() % 4);
        for (int b = 0; b < n_blobs; ++b) {
            double cx = rng.uniform(0.0, double(w));
            double cy = rng.uniform(0.0, double(h));
            double sig = rng.uniform(1.0, 3.0);
            double amp = rng.uniform(0.5, 1.0);
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    double dy = double(i) - cy, dx = double(j) - cx;
                    u[i * w + j] += amp * std::exp(-(dx * dx + dy * dy) / (2.0 * sig * sig));
                }
        }
        for (std::size_t t = 0; t < steps; ++t) {
            const std::size_t off = obs_offset(ds, traj, t);
            for (std::size_t i = 0; i < h * w; ++i) ds.observations[off + i] = float(u[i]);
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    std::size_t up = ((i + h - 1) % h) * w + j;
                    std::size_t dn = ((i + 1) % h) * w + j;
                    std::size_t lf = i * w + (j + w - 1) % w;
                    std::size_t rt = i * w + (j + 1) % w;
                    un[i * w + j] = u[i * w + j] +
                                    nu * dt * (u[up] + u[dn] + u[lf] + u[rt] - 4.0 * u[i * w + j]);
                }
            u.swap(un);
        }
    }
    return ds;
}

Tensor patchify(const Tensor& obs, const PatchGrid& grid, const Tensor& embed) {
    const std::size_t hh = grid.height, ww = grid.width, cc = grid.channels, p = grid.patch;
    if (hh % p != 0 || ww % p != 0) throw ShapeError("patchify: grid must divide observation");
    if (obs.rows() != hh || obs.cols() != ww * cc) throw ShapeError("patchify: observation shape");
    if (embed.rows() != p * p * cc) throw ShapeError("patchify: embed rows vs patch elements");
    const std::size_t gy = hh / p, gx = ww / p;
    std::vector<std::size_t> perm(hh * ww * cc);
    std::size_t k = 0;
    for (std::size_t ty = 0; ty < gy; ++ty)
        for (std::size_t tx = 0; tx < gx; ++tx)
            for (std::size_t py = 0; py < p; ++py)
                for (std::size_t px = 0; px < p; ++px)
                    for (std::size_t c = 0; c < cc; ++c)
                        perm[k++] = ((ty * p + py) * ww + (tx * p + px)) * cc + c;
    Tensor patches = permute_flat(obs, std::move(perm), gy * gx, p * p * cc);
    return matmul(patches, embed);
}

Tensor unpatchify(const Tensor& tokens, const PatchGrid& grid, const Tensor& readout) {
    const std::size_t hh = grid.height, ww = grid.width, cc = grid.channels, p = grid.patch;
    const std::size_t gy = hh / p, gx = ww / p;
    if (tokens.rows() != gy * gx) throw ShapeError("unpatchify: token count");
    Tensor patches = matmul(tokens, readout);  // N_tok x p*p*C
    std::vector<std::size_t> perm(hh * ww * cc);
    std::size_t k = 0;
    for (std::size_t ty = 0; ty < gy; ++ty)
        for (std::size_t tx = 0; tx < gx; ++tx)
            for (std::size_t py = 0; py < p; ++py)
                for (std::size_t px = 0; px < p; ++px)
                    for (std::size_t c = 0; c < cc; ++c) {
                        std::size_t dst = ((ty * p + py) * ww + (tx * p + px)) * cc + c;
                        perm[dst] = k++;
                    }
    return permute_flat(patches, std::move(perm), hh, ww * cc);
}

void save_dataset(const TrajectoryDataset& ds, const std::string& path) {
    nlohmann::json header = {
        {"system", ds.system}, {"seed", ds.seed},       {"dt", ds.dt},
        {"num_traj", ds.num_traj}, {"steps", ds.steps}, {"n_slots", ds.n_slots},
        {"dim", ds.dim},       {"obs_h", ds.obs_h},     {"obs_w", ds.obs_w},
        {"obs_c", ds.obs_c},   {"elements_slots", ds.slots.size()},
        {"elements_obs", ds.observations.size()}};
    std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("save_dataset: cannot open " + path);
    f.write(kMagic, 8);
    std::uint32_t len = std::uint32_t(hs.size());
    f.write(reinterpret_cast<const char*>(&len), 4);
    f.write(hs.data(), hs.size());
    f.write(reinterpret_cast<const char*>(ds.slots.data()), ds.slots.size() * 4);
    f.write(reinterpret_cast<const char*>(ds.observations.data()), ds.observations.size() * 4);
    if (!f) throw FormatError("save_dataset: write failure");
}

TrajectoryDataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw FormatError("load_dataset: cannot open " + path);
    const std::size_t file_size = std::size_t(f.tellg());
    f.seekg(0);

    char magic[8];
    std::uint32_t len = 0;
    if (file_size < 12 || !f.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw FormatError("load_dataset: bad magic");
    f.read(reinterpret_cast<char*>(&len), 4);
    if (!f || 12 + std::size_t(len) > file_size) throw FormatError("load_dataset: truncated header");
    std::string hs(len, '\0');
    f.read(hs.data(), len);
    if (!f) throw FormatError("load_dataset: truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception&) {
        throw FormatError("load_dataset: malformed header");
    }

    TrajectoryDataset ds;
    try {
        ds.system = header.at("system").get<std::string>();
        ds.seed = header.at("seed").get<std::uint64_t>();
        ds.dt = header.at("dt").get<double>();
        ds.num_traj = header.at("num_traj").get<std::size_t>();
        ds.steps = header.at("steps").get<std::size_t>();
        ds.n_slots = header.at("n_slots").get<std::size_t>();
        ds.dim = header.at("dim").get<std::size_t>();
        ds.obs_h = header.at("obs_h").get<std::size_t>();
        ds.obs_w = header.at("obs_w").get<std::size_t>();
        ds.obs_c = header.at("obs_c").get<std::size_t>();
    } catch (const nlohmann::json::exception&) {
        throw FormatError("load_dataset: missing header fields");
    }
    const std::size_t n_slot_el = header.at("elements_slots").get<std::size_t>();
    const std::size_t n_obs_el = header.at("elements_obs").get<std::size_t>();
    if (n_slot_el != ds.num_traj * ds.steps * ds.n_slots * ds.dim ||
        n_obs_el != ds.num_traj * ds.steps * ds.obs_h * ds.obs_w * ds.obs_c)
        throw FormatError("load_dataset: header element counts inconsistent with shapes");
    if (file_size != 12 + std::size_t(len) + (n_slot_el + n_obs_el) * 4)
        throw FormatError("load_dataset: payload length vs declared element count");

    ds.slots.resize(n_slot_el);
    ds.observations.resize(n_obs_el);
    f.read(reinterpret_cast<char*>(ds.slots.data()), n_slot_el * 4);
    f.read(reinterpret_cast<char*>(ds.observations.data()), n_obs_el * 4);
    if (!f) throw FormatError("load_dataset: truncated payload");
    return ds;
}

}  // namespace slotpi
