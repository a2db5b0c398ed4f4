#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "kmerspace/rng.hpp"
#include "kmerspace/seqcore.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int status = -1;
  std::string output;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(KMERSPACE_CLI) + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.output.append(buf.data(), n);
  const int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / ("kmerspace_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    kmerspace::Rng rng(17);
    std::string seq;
    for (int i = 0; i < 600; ++i) seq.push_back(kmerspace::kBaseChars[kmerspace::uniform_int(rng, 0, 3)]);
    std::ofstream(dir / "ref.fa") << ">ref\n" << seq << "\n";
    std::ofstream(dir / "run.ini") << "[train]\nbatch_pairs = 4\nwarmup = 1\n"
                                   << "[head]\nmlp_width = 16\nmlp_layers = 1\n"
                                   << "[head_train]\nbatch = 8\nwarmup = 1\npool_size = 32\n";
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string operator()(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("missing or invalid arguments exit with status 2") {
  Workspace ws;
  auto r = run("map --checkpoint " + ws("none.ckpt") + " --fasta " + ws("ref.fa") + " --out " + ws("m.tsv"));
  CHECK(r.status == 2);
  CHECK(r.output.find("--reads") != std::string::npos);

  std::ofstream(ws.dir / "bad.ini") << "[train]\nbogus = 1\n";
  r = run("simulate-reads --config " + ws("bad.ini") + " --fasta " + ws("ref.fa") + " --n 5 --out " + ws("x.tsv"));
  CHECK(r.status == 2);
  CHECK(r.output.find("bogus") != std::string::npos);

  CHECK(run("no-such-command").status == 2);
  CHECK(run("simulate-reads --fasta " + ws("missing.fa") + " --n 5 --out " + ws("x.tsv")).status == 1);
}

TEST_CASE("end-to-end pipeline is deterministic") {
  Workspace ws;
  const std::string ref = " --fasta " + ws("ref.fa");
  const std::string cfg = " --config " + ws("run.ini");

  REQUIRE(run("simulate-reads" + ref + " --n 40 --noiseless --seed 3 --out " + ws("r1.tsv")).status == 0);
  REQUIRE(run("simulate-reads" + ref + " --n 40 --noiseless --seed 3 --out " + ws("r2.tsv")).status == 0);
  REQUIRE(run("simulate-reads" + ref + " --n 40 --noiseless --seed 4 --out " + ws("r3.tsv")).status == 0);
  CHECK(slurp(ws("r1.tsv")) == slurp(ws("r2.tsv")));
  CHECK(slurp(ws("r1.tsv")) != slurp(ws("r3.tsv")));
  CHECK(fs::exists(ws("r1.tsv.config.ini")));

  for (const char* name : {"e1.ckpt", "e2.ckpt"}) {
    auto r = run("train-encoder" + ref + cfg + " --iterations 2 --gamma 100 --seed 5 --out " + ws(name));
    REQUIRE_MESSAGE(r.status == 0, r.output);
  }
  CHECK(slurp(ws("e1.ckpt")) == slurp(ws("e2.ckpt")));

  auto th = run("train-head" + ref + cfg + " --checkpoint " + ws("e1.ckpt") +
                " --head cce --iterations 2 --seed 5 --out " + ws("full.ckpt"));
  REQUIRE_MESSAGE(th.status == 0, th.output);

  auto mp = run("map" + ref + " --checkpoint " + ws("full.ckpt") + " --head cce --reads " + ws("r1.tsv") +
                " --window 1300 --out " + ws("map.tsv"));
  REQUIRE_MESSAGE(mp.status == 0, mp.output);
  auto ev = run("eval --mapping " + ws("map.tsv") + " --reads " + ws("r1.tsv") + " --out " + ws("ecdf.csv"));
  REQUIRE_MESSAGE(ev.status == 0, ev.output);
  INFO(ev.output);
  CHECK(ev.output.find("accuracy=1.0000") != std::string::npos);
  CHECK(slurp(ws("ecdf.csv")).rfind("t,ecdf,one_minus_ecdf\n", 0) == 0);

  const std::string model = ref + " --checkpoint " + ws("e1.ckpt");
  CHECK(run("embed" + model + " --stride 50 --out " + ws("emb.csv")).status == 0);
  CHECK(slurp(ws("emb.csv")).rfind("coordinate,z0,", 0) == 0);
  CHECK(run("pca" + model + " --stride 20 --out " + ws("pca.csv")).status == 0);
  CHECK(slurp(ws("pca.csv")).rfind("pc1,pc2,coordinate\n", 0) == 0);
  CHECK(run("knn-stats" + model + " --stride 20 --k 3 --out " + ws("knn.csv")).status == 0);
  CHECK(slurp(ws("knn.csv")).rfind("coordinate,mean_knn_distance\n", 0) == 0);
}
