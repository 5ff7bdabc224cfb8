#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "spinlm/model_io.hpp"
#include "support.hpp"

using testsupport::data_path;
using testsupport::run_cli;
using testsupport::scratch_dir;
using testsupport::split_csv;
using testsupport::split_lines;
using testsupport::write_scratch;

TEST_CASE("algebra summary and table") {
  const auto res = run_cli("algebra --p 2 --q 0");
  CHECK(res.exit_code == 0);
  CHECK(res.out.find("signature: Cl(2,0)") != std::string::npos);
  CHECK(res.out.find("even dimension: 2") != std::string::npos);
  CHECK(res.out.find("bivector count: 1") != std::string::npos);

  const auto table = run_cli("algebra --p 1 --q 1 --table");
  CHECK(table.exit_code == 0);
  CHECK(table.out.find("Cayley table for Cl(1,1)") != std::string::npos);
  CHECK(table.out.find("e12") != std::string::npos);

  CHECK(run_cli("algebra --p 13 --q 0").exit_code == 2);
  CHECK(run_cli("algebra --p 6 --q 0 --table").exit_code == 2);
}

TEST_CASE("usage errors exit with the argument code") {
  CHECK(run_cli("").exit_code == 2);
  CHECK(run_cli("no-such-command").exit_code == 2);
  CHECK(run_cli("train-lm").exit_code == 2);  // missing required --corpus
  CHECK(run_cli("train-lm --corpus").exit_code == 2);
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("algebra --help").exit_code == 0);
}

TEST_CASE("training prints a perplexity curve and saves a loadable model") {
  const std::string model = scratch_dir() + "/cli_lm.json";
  const auto res = run_cli("train-lm --corpus " + data_path("repetitive.txt") +
                           " --p 2 --q 0 --epochs 3 --seed 5 --out " + model);
  REQUIRE(res.exit_code == 0);
  const auto lines = split_lines(res.out);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "epoch,train_ppl,val_ppl");
  CHECK(split_csv(lines[1])[0] == "0");
  CHECK(split_csv(lines[4])[0] == "3");
  const double first = std::stod(split_csv(lines[1])[2]);
  const double last = std::stod(split_csv(lines[4])[2]);
  CHECK(last < first);

  const spinlm::SpinorLmModel m = spinlm::load_spinor_model(model);
  CHECK(m.table.vocab == std::vector<std::string>{"a", "b"});
  CHECK(m.epochs_trained == 3);
  CHECK(m.seed == 5);
}

TEST_CASE("same seed reruns emit byte-identical reports") {
  const std::string args = "train-lm --corpus " + data_path("pattern.txt") +
                           " --p 3 --q 0 --epochs 2 --seed 11";
  const auto a = run_cli(args);
  const auto b = run_cli(args);
  REQUIRE(a.exit_code == 0);
  CHECK(a.out == b.out);

  const auto c = run_cli(args + "1");  // seed 111
  REQUIRE(c.exit_code == 0);
  CHECK(a.out != c.out);
}

TEST_CASE("the baseline trainer mirrors the spinor report format") {
  const auto res = run_cli("train-baseline --corpus " + data_path("repetitive.txt") +
                           " --p 2 --q 0 --epochs 3 --seed 5");
  REQUIRE(res.exit_code == 0);
  const auto lines = split_lines(res.out);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "epoch,train_ppl,val_ppl");

  const std::string model = scratch_dir() + "/cli_baseline.json";
  const auto saved = run_cli("train-baseline --corpus " + data_path("repetitive.txt") +
                             " --p 2 --q 0 --epochs 1 --seed 5 --out " + model);
  REQUIRE(saved.exit_code == 0);
  CHECK(spinlm::load_model(model).kind == spinlm::kVectorKind);
}

TEST_CASE("training failures map to the documented exit codes") {
  CHECK(run_cli("train-lm --corpus /nonexistent/corpus.txt --epochs 1").exit_code == 2);
  CHECK(run_cli("train-lm --corpus " + data_path("repetitive.txt") +
                " --epochs 1 --lr 1e12").exit_code == 4);
  const std::string tiny = write_scratch("tiny_corpus.txt", "a b\n");
  CHECK(run_cli("train-lm --corpus " + tiny + " --epochs 1").exit_code == 3);
}

TEST_CASE("analogy fits a rotor from a pairs file") {
  const std::string model = scratch_dir() + "/cli_analogy.json";
  REQUIRE(run_cli("train-lm --corpus " + data_path("pattern.txt") +
                  " --p 3 --q 0 --epochs 2 --seed 3 --out " + model).exit_code == 0);

  const std::string pairs = write_scratch("pairs.txt", "a b\nb c\n");
  const auto res = run_cli("analogy --model " + model + " --pairs " + pairs);
  REQUIRE(res.exit_code == 0);
  CHECK(res.out.find("pairs: 2") != std::string::npos);
  CHECK(res.out.find("rotor:") != std::string::npos);
  CHECK(res.out.find("train_accuracy:") != std::string::npos);
  CHECK(res.out.find("holdout_accuracy:") == std::string::npos);

  const std::string holdout = write_scratch("holdout.txt", "c a\n");
  const auto held = run_cli("analogy --model " + model + " --pairs " + pairs + " --holdout " +
                            holdout);
  REQUIRE(held.exit_code == 0);
  CHECK(held.out.find("holdout_pairs: 1") != std::string::npos);
  CHECK(held.out.find("holdout_accuracy:") != std::string::npos);

  const std::string unknown = write_scratch("unknown_pairs.txt", "a zebra\n");
  CHECK(run_cli("analogy --model " + model + " --pairs " + unknown).exit_code == 3);
  const std::string malformed = write_scratch("odd_pairs.txt", "a b c\n");
  CHECK(run_cli("analogy --model " + model + " --pairs " + malformed).exit_code == 3);
  CHECK(run_cli("analogy --model /missing.json --pairs " + pairs).exit_code == 2);

  const std::string corrupt = write_scratch("corrupt_model.json", "{broken");
  CHECK(run_cli("analogy --model " + corrupt + " --pairs " + pairs).exit_code == 3);
}

TEST_CASE("the 720 degree walk prints the frozen periodicity table") {
  const auto res = run_cli("demo720 --p 2 --q 0 --steps 8");
  REQUIRE(res.exit_code == 0);
  CHECK(res.out ==
        "step,angle_deg,one_sided,two_sided\n"
        "0,0,+psi,+v\n"
        "1,90,other,other\n"
        "2,180,other,-v\n"
        "3,270,other,other\n"
        "4,360,-psi,+v\n"
        "5,450,other,other\n"
        "6,540,other,-v\n"
        "7,630,other,other\n"
        "8,720,+psi,+v\n");

  CHECK(run_cli("demo720 --p 1 --q 1").exit_code == 2);
  CHECK(run_cli("demo720 --steps 0").exit_code == 2);
  CHECK(run_cli("demo720 --p 0 --q 2 --steps 4").exit_code == 0);
}

TEST_CASE("attention weights for a text form per-query distributions") {
  const std::string model = scratch_dir() + "/cli_attend.json";
  REQUIRE(run_cli("train-lm --corpus " + data_path("pattern.txt") +
                  " --p 2 --q 0 --epochs 1 --seed 2 --out " + model).exit_code == 0);

  const auto res = run_cli("attend --model " + model + " --text \"a b c a\"");
  REQUIRE(res.exit_code == 0);
  const auto lines = split_lines(res.out);
  REQUIRE(lines.size() == 17);  // header + 4x4 weights for one head
  CHECK(lines[0] == "head,query,key,weight");
  std::vector<double> row_total(4, 0.0);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_csv(lines[i]);
    REQUIRE(f.size() == 4);
    row_total[static_cast<std::size_t>(std::stoi(f[1]))] += std::stod(f[3]);
  }
  for (double t : row_total) CHECK(t == Catch::Approx(1.0).margin(1e-9));

  CHECK(run_cli("attend --model " + model + " --text \"a zebra\"").exit_code == 3);
  CHECK(run_cli("attend --model " + model + " --text \"  \"").exit_code == 2);
}

TEST_CASE("unknown text tokens fall back to the unknown marker when the vocab has one") {
  const std::string model = scratch_dir() + "/cli_attend_unk.json";
  REQUIRE(run_cli("train-lm --corpus " + data_path("sentences.txt") +
                  " --p 2 --q 0 --epochs 1 --seed 2 --max-vocab 10 --out " + model)
              .exit_code == 0);
  CHECK(run_cli("attend --model " + model + " --text \"zebra zebra\"").exit_code == 0);
}

TEST_CASE("projection writes one row per token") {
  const std::string model = scratch_dir() + "/cli_project.json";
  REQUIRE(run_cli("train-lm --corpus " + data_path("pattern.txt") +
                  " --p 3 --q 0 --epochs 1 --seed 7 --out " + model).exit_code == 0);
  const std::string csv = scratch_dir() + "/proj.csv";
  const auto res = run_cli("project --model " + model + " --out " + csv);
  REQUIRE(res.exit_code == 0);
  const auto lines = split_lines(spinlm::read_text_file(csv));
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "token,x,y");
  CHECK(split_csv(lines[1])[0] == "a");
  CHECK(split_csv(lines[2])[0] == "b");
  CHECK(split_csv(lines[3])[0] == "c");
}

TEST_CASE("the signature sweep reports one row per signature in order") {
  const auto res = run_cli("ablate --corpus " + data_path("repetitive.txt") +
                           " --signatures \"2,0;1,1\" --epochs 1");
  REQUIRE(res.exit_code == 0);
  const auto lines = split_lines(res.out);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "signature,val_ppl,seconds");
  CHECK(split_csv(lines[1])[0] == "Cl(2,0)");
  CHECK(split_csv(lines[2])[0] == "Cl(1,1)");

  CHECK(run_cli("ablate --corpus " + data_path("repetitive.txt") +
                " --signatures \"bogus\" --epochs 1").exit_code == 2);
}
