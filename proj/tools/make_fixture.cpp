// Writes the bundled synthetic regime-switching price panel.
#include <fstream>
#include <iostream>

#include "pcahmm/report.hpp"
#include "pcahmm/synthetic.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixture <out.csv>\n";
    return 2;
  }
  const auto market = pcahmm::synthetic::regime_switching_market({}, 20240601);
  std::ofstream out(argv[1], std::ios::binary);
  const auto& p = market.prices;
  out << "date";
  for (const auto& a : p.assets) out << ',' << a;
  out << '\n';
  for (std::size_t t = 0; t < p.dates.size(); ++t) {
    out << p.dates[t];
    for (std::size_t j = 0; j < p.assets.size(); ++j) out << ',' << pcahmm::report::format_double(p.prices(t, j));
    out << '\n';
  }
  return out ? 0 : 1;
}
