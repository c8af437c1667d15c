// Writes synthetic Porto-like trips in the competition CSV schema.
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "tconv/ingest.hpp"
#include "tconv/synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic taxi trips in the competition CSV schema", "tconv_synth"};
  tconv::SynthOptions o;
  std::string out;
  app.add_option("--out", out, "CSV file to write (default: stdout)");
  app.add_option("--trips", o.trips, "Number of trips");
  app.add_option("--seed", o.seed, "Seed of the trip draws");
  app.add_option("--layout-seed", o.layout_seed, "Seed of the city layout");
  app.add_option("--missing", o.missing_fraction, "Share of rows flagged MISSING_DATA");
  app.add_option("--empty", o.empty_fraction, "Share of rows with an empty polyline");
  app.add_option("--jumps", o.jump_fraction, "Share of rows with a GPS jump");
  CLI11_PARSE(app, argc, argv);

  const auto trips = tconv::synthesize_trips(o);
  if (out.empty()) {
    tconv::write_trips(std::cout, trips);
  } else {
    std::ofstream f(out);
    if (!f) {
      std::cerr << "cannot write " << out << '\n';
      return 1;
    }
    tconv::write_trips(f, trips);
  }
  return 0;
}
