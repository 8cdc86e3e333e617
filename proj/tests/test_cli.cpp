#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <string>

#include "iontherm/dynamics.hpp"
#include "iontherm/experiments.hpp"
#include "iontherm/imaging.hpp"

using namespace iontherm;

namespace {

int run(const std::string& args, const std::string& stdout_file = "cli_out.txt") {
    const std::string cmd = std::string(IONTHERM_BIN) + " " + args + " > " + stdout_file + " 2>cli_err.txt";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::string all, line;
    while (std::getline(in, line)) all += line + "\n";
    return all;
}

} // namespace

TEST_CASE("cli: selftest runs the invariant suite and exits 0") {
    CHECK(run("selftest") == 0);
    CHECK(slurp("cli_out.txt").find("all checks passed") != std::string::npos);
}

TEST_CASE("cli: missing config file exits 2") {
    CHECK(run("heating-levels --config /no/such/file.cfg --out cli_tmp") == 2);
}

TEST_CASE("cli: bad mode string exits 2") {
    CHECK(run("heating-levels --mode warm --out cli_tmp") == 2);
}

TEST_CASE("cli: unknown subcommand exits 2") {
    CHECK(run("frobnicate") == 2);
}

TEST_CASE("cli: config with unknown key exits 2") {
    std::ofstream("cli_bad.cfg") << "laser.detuning_mhz = -12\nnot.a.key = 3\n";
    CHECK(run("detuning-sweep --config cli_bad.cfg --out cli_tmp") == 2);
}

TEST_CASE("cli: fit-image on a rendered frame prints parameters and thermometry") {
    ImagingConfig imaging;
    imaging.psf_radius_m = 300e-9;
    imaging.pixel_pitch_m = 22e-9;
    imaging.quantum_efficiency = 0.8;
    imaging.read_noise_counts = 3.0;
    imaging.baseline_offset_counts = 20.0;
    imaging.grid_width = imaging.grid_height = 96;
    const auto image = render_image(120e-9, 150e-9, 0.0, imaging, 3e4, 9, true);
    write_pgm16("cli_frame.pgm", image);

    CHECK(run("fit-image cli_frame.pgm") == 0);
    const std::string out = slurp("cli_out.txt");
    CHECK(out.find("radius_x_nm = ") != std::string::npos);
    CHECK(out.find("method,axis,mode,") != std::string::npos);
    CHECK(out.find("spatial,x,physical,") != std::string::npos);

    CHECK(run("fit-image cli_frame.pgm --mode paper-literal") == 0);
    CHECK(slurp("cli_out.txt").find("paper-literal") != std::string::npos);
}

TEST_CASE("cli: fit-spectrum on a frozen scan prints the band") {
    const IonSpecies ion = yb174();
    LaserConfig laser;
    laser.saturation = 0.5;
    std::vector<double> grid;
    for (double mhz = -80.0; mhz <= 12.0; mhz += 2.0) grid.push_back(mhz * 1e6);
    const auto scan = frozen_spectrum_scan(0.15, laser, ion, grid, 1e-3, 1.2e6, 1.0, 25.0);
    write_scan_csv("cli_scan.csv", scan);

    CHECK(run("fit-spectrum cli_scan.csv") == 0);
    const std::string out = slurp("cli_out.txt");
    CHECK(out.find("fwhm_total_mhz = ") != std::string::npos);
    CHECK(out.find("spectroscopic,beam,physical,") != std::string::npos);
}

TEST_CASE("cli: malformed scan csv exits 1") {
    std::ofstream("cli_garbage.csv") << "detuning_mhz,rate_hz,dwell_s\nnot,numbers,here\n";
    CHECK(run("fit-spectrum cli_garbage.csv") == 1);
}

TEST_CASE("cli: heating-levels runs end to end with config, seed, ensemble, and mode flags") {
    std::ofstream("cli_mini.cfg") << "sim.duration_s = 0.004\n"
                                  << "sim.ensemble = 4\n"   // overridden below
                                  << "output.photons_per_image = 1e4\n";
    CHECK(run("heating-levels --config cli_mini.cfg --out cli_exp --seed 5 --ensemble 2 "
              "--mode paper-literal") == 0);

    std::ifstream csv("cli_exp/heating_levels.csv");
    REQUIRE(csv.good());
    std::string header, row;
    std::getline(csv, header);
    CHECK(header.find("mode") != std::string::npos);
    int rows = 0;
    while (std::getline(csv, row))
        if (!row.empty()) {
            CHECK(row.find("paper-literal") != std::string::npos);
            ++rows;
        }
    CHECK(rows == 6);
    CHECK(std::ifstream("cli_exp/heating_level0.pgm").good());

    // Same invocation, byte-identical output.
    CHECK(run("heating-levels --config cli_mini.cfg --out cli_exp2 --seed 5 --ensemble 2 "
              "--mode paper-literal") == 0);
    CHECK(slurp("cli_exp/heating_levels.csv") == slurp("cli_exp2/heating_levels.csv"));
}
