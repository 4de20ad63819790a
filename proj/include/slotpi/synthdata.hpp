#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "slotpi/tensor.hpp"

namespace slotpi {

// Batched slot sequences (and optional grid observations). Payloads are
// stored as 32-bit floats, matching the on-disk format, so save/load
// roundtrips are bit-exact.
struct TrajectoryDataset {
    std::size_t num_traj = 0;
    std::size_t steps = 0;       // T
    std::size_t n_slots = 0;     // N (0 when observations-only)
    std::size_t dim = 0;         // D
    std::size_t obs_h = 0, obs_w = 0, obs_c = 0;
    double dt = 0.1;
    std::string system;
    std::uint64_t seed = 0;
    std::vector<float> slots;         // num_traj * T * N * D
    std::vector<float> observations;  // num_traj * T * H * W * C

    bool has_slots() const { return n_slots > 0; }
    bool has_observations() const { return obs_h > 0; }

    Tensor slot_frame(std::size_t traj, std::size_t t) const;       // N x D
    Tensor obs_frame(std::size_t traj, std::size_t t) const;        // H x (W*C)
    std::vector<double> obs_frame_flat(std::size_t traj, std::size_t t) const;
};

struct PatchGrid {
    std::size_t height = 0, width = 0, channels = 1, patch = 2;
    std::size_t tokens() const { return (height / patch) * (width / patch); }
};

// Unit-mass harmonic oscillators, exact closed form. Slot = [q, p, w, 0...].
TrajectoryDataset gen_spring_mass(std::size_t num_traj, std::size_t steps, std::size_t n_bodies,
                                  double dt, std::uint64_t seed);

// Underdamped oscillator, exact closed form. Slot = [q, p, w, gamma, 0...].
// gamma = 0 reduces bitwise to a single-body spring-mass dataset.
TrajectoryDataset gen_damped_oscillator(std::size_t num_traj, std::size_t steps, double dt,
                                        double gamma, std::uint64_t seed);

// Elastic discs in a unit box, symplectic-Euler substeps, no gravity, so
// kinetic energy is conserved. Slot = [x, y, vx, vy, r, 0...].
TrajectoryDataset gen_bouncing_balls(std::size_t num_traj, std::size_t steps, std::size_t n_balls,
                                     double dt, std::uint64_t seed);

// Periodic 2-D heat equation, explicit 5-point stencil, observations only.
TrajectoryDataset gen_diffusion2d(std::size_t num_traj, std::size_t steps, std::size_t h,
                                  std::size_t w, double dt, double nu, std::uint64_t seed);

// Row-major p x p patches through a learned linear embedding.
Tensor patchify(const Tensor& obs, const PatchGrid& grid, const Tensor& embed);
Tensor unpatchify(const Tensor& tokens, const PatchGrid& grid, const Tensor& readout);

void save_dataset(const TrajectoryDataset& ds, const std::string& path);
TrajectoryDataset load_dataset(const std::string& path);

}  // namespace slotpi
