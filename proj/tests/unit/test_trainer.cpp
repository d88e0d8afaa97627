#include <doctest.h>

#include <filesystem>

#include <nlohmann/json.hpp>

#include "contrast/trainer.hpp"
#include "support/gradcheck.hpp"

using namespace contrast;
namespace fs = std::filesystem;

namespace {

ParamRegistry single(const Tensor& t) {
  ParamRegistry reg;
  reg.add("p", t);
  return reg;
}

void set_grad(const Tensor& t, std::vector<double> g) {
  Tensor h = t;
  auto dst = h.mutable_grad();
  std::copy(g.begin(), g.end(), dst.begin());
}

std::shared_ptr<const std::vector<LoadedImage>> synthetic_data() {
  std::vector<LoadedImage> v;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 2; ++i) {
    LoadedImage li;
    li.name = std::to_string(i);
    li.hr = ImagePlane(24, 24);
    for (auto& p : li.hr.pixels) p = u(rng);
    li.hr = quantize(li.hr);
    li.lr = degrade(li.hr, 2);
    v.push_back(li);
  }
  return std::make_shared<const std::vector<LoadedImage>>(v);
}

TrainConfig small_cfg() {
  TrainConfig t;
  t.total_iters = 8;
  t.batch = 2;
  t.patch = 6;
  t.base_lr = 1e-3;
  t.milestones = {5};
  t.seed = 4;
  t.log_every = 1;
  t.checkpoint_every = 0;
  t.val_every = 0;
  return t;
}

std::vector<double> all_params(const Model& m) {
  std::vector<double> out;
  for (const auto& [n, t] : m.params().entries()) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

}  // namespace

TEST_CASE("adam first step moves by lr") {
  Tensor p({3}, {1.0, -2.0, 0.5}, true);
  auto reg = single(p);
  auto st = init_adam(reg);
  set_grad(p, {0.3, -7.0, 1e-3});
  adam_step(reg, st, 0.01);
  CHECK(st.step == 1);
  CHECK(p.data()[0] == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + 1e-8)).epsilon(1e-14));
  CHECK(p.data()[1] == doctest::Approx(-2.0 + 0.01 * 7.0 / (7.0 + 1e-8)).epsilon(1e-14));
  CHECK(p.data()[2] == doctest::Approx(0.5 - 0.01 * 1e-3 / (1e-3 + 1e-8)).epsilon(1e-14));
}

TEST_CASE("adam with a constant gradient steps by lr sign(g)") {
  Tensor p({2}, {0.0, 0.0}, true);
  auto reg = single(p);
  auto st = init_adam(reg);
  for (int i = 0; i < 25; ++i) {
    set_grad(p, {2.0, -0.5});
    adam_step(reg, st, 0.1);
  }
  CHECK(p.data()[0] == doctest::Approx(-2.5).epsilon(1e-6));
  CHECK(p.data()[1] == doctest::Approx(2.5).epsilon(1e-6));
}

TEST_CASE("adam edge cases") {
  Tensor p({2}, {1.0, 2.0}, true);
  auto reg = single(p);
  auto st = init_adam(reg);
  set_grad(p, {0.0, 0.0});
  adam_step(reg, st, 0.1);
  CHECK(p.data()[0] == 1.0);
  CHECK(p.data()[1] == 2.0);

  set_grad(p, {1.0, 1.0});
  adam_step(reg, st, 0.0);
  CHECK(p.data()[0] == 1.0);
  CHECK(st.step == 2);
  CHECK(st.m[0][0] == doctest::Approx(0.1));
  CHECK(st.v[0][0] == doctest::Approx(0.01));

  // second step matches the closed form for g = (0, 1)
  set_grad(p, {0.0, 1.0});
  adam_step(reg, st, 0.1);
  const double m = 0.9 * 0.1 + 0.1, v = 0.99 * 0.01 + 0.01;
  const double mh = m / (1 - 0.9 * 0.9 * 0.9), vh = v / (1 - 0.99 * 0.99 * 0.99);
  CHECK(p.data()[1] == doctest::Approx(2.0 - 0.1 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-14));

  Tensor q({1}, {0.0}, true);
  auto r2 = single(q);
  auto s2 = init_adam(r2);
  CHECK_THROWS_AS(adam_step(r2, s2, 0.1), ContractError);
  CHECK_THROWS_AS(adam_step(reg, s2, 0.1), ContractError);
}

TEST_CASE("learning rate schedule") {
  const auto t = train_preset("contrast");
  CHECK(t.base_lr == 1e-4);
  CHECK(train_preset("contrast-s").base_lr == 2e-4);
  CHECK(lr_at(0, t) == 1e-4);
  CHECK(lr_at(249999, t) == 1e-4);
  CHECK(lr_at(250000, t) == 5e-5);
  CHECK(lr_at(399999, t) == 5e-5);
  CHECK(lr_at(400000, t) == 2.5e-5);
  CHECK(lr_at(450000, t) == 1.25e-5);
  CHECK(lr_at(475000, t) == 6.25e-6);
  CHECK(lr_at(499999, t) == 6.25e-6);
}

TEST_CASE("l1 loss") {
  Tensor a({2, 2}, {1.0, 2.0, 3.0, 4.0}, true);
  Tensor b({2, 2}, {1.5, 2.0, 1.0, 4.0});
  auto l = l1_loss(a, b);
  CHECK(l.item() == doctest::Approx(0.625));
  autograd::backward(l);
  CHECK(a.grad()[0] == -0.25);
  CHECK(a.grad()[1] == 0.0);
  CHECK(a.grad()[2] == 0.25);
  autograd::clear_graph();
  CHECK_THROWS_AS(l1_loss(a, Tensor::zeros({4})), ShapeError);
}

TEST_CASE("train config validation") {
  CHECK_NOTHROW(TrainConfig{}.validate());
  auto bad = [](auto mutate) {
    TrainConfig t;
    mutate(t);
    CHECK_THROWS_AS(t.validate(), ConfigError);
  };
  bad([](TrainConfig& t) { t.total_iters = 0; });
  bad([](TrainConfig& t) { t.batch = 0; });
  bad([](TrainConfig& t) { t.base_lr = -1.0; });
  bad([](TrainConfig& t) { t.beta2 = 1.0; });
  bad([](TrainConfig& t) { t.epsilon = 0.0; });
  bad([](TrainConfig& t) { t.milestones = {10, 5}; });
  bad([](TrainConfig& t) { t.milestones = {600000}; });
  bad([](TrainConfig& t) { t.prefetch = -1; });
}

TEST_CASE("training records and the schedule") {
  Trainer tr(model_preset("tiny"), small_cfg(), synthetic_data());
  std::vector<TrainRecord> recs;
  while (!tr.finished()) recs.push_back(tr.step());
  REQUIRE(recs.size() == 8);
  CHECK(recs[0].iter == 0);
  CHECK(recs[4].lr == 1e-3);
  CHECK(recs[5].lr == 5e-4);
  for (const auto& r : recs) CHECK(std::isfinite(r.loss));
  CHECK(tr.checkpoint().iteration == 8);
  CHECK(nlohmann::json::parse(record_json(recs[3]))["iter"] == 3);
}

TEST_CASE("training is deterministic and resumable") {
  auto data = synthetic_data();
  auto cfg = small_cfg();
  cfg.prefetch = 2;
  Trainer a(model_preset("tiny"), cfg, data);
  Trainer b(model_preset("tiny"), cfg, data);
  std::vector<double> la, lb;
  for (int i = 0; i < 4; ++i) {
    la.push_back(a.step().loss);
    lb.push_back(b.step().loss);
  }
  CHECK(la == lb);
  const auto dir = fs::temp_directory_path() / "contrast_unit_resume";
  fs::create_directories(dir);
  save_checkpoint(dir / "c.ckpt", a.checkpoint());
  Trainer c(load_checkpoint(dir / "c.ckpt"), cfg, data);
  CHECK(c.iteration() == 4);
  for (int i = 0; i < 4; ++i) CHECK(a.step().loss == c.step().loss);
  CHECK(all_params(a.model()) == all_params(c.model()));

  auto other = cfg;
  other.seed = 5;
  Trainer d(model_preset("tiny"), other, data);
  CHECK(d.step().loss != la[0]);

  auto bare = snapshot(a.model());
  CHECK_THROWS_AS(Trainer(bare, cfg, data), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("run writes a log and checkpoint") {
  const auto dir = fs::temp_directory_path() / "contrast_unit_run";
  fs::remove_all(dir);
  auto cfg = small_cfg();
  cfg.checkpoint_every = 4;
  cfg.val_every = 4;
  auto data = synthetic_data();
  Trainer tr(model_preset("tiny"), cfg, data);
  Trainer::RunOptions opts;
  opts.out_dir = dir;
  opts.val_image = (*data)[0];
  opts.max_steps = 6;
  const auto recs = tr.run(opts);
  CHECK(recs.size() == 6);
  CHECK(recs[3].val_psnr.has_value());
  CHECK_FALSE(recs[4].val_psnr.has_value());
  CHECK(recs[5].val_psnr.has_value());
  CHECK(fs::exists(dir / "iter_4.ckpt"));
  CHECK(fs::exists(dir / "log.jsonl"));
  CHECK(load_checkpoint(dir / "latest.ckpt").iteration == 6);
  CHECK(*recs[5].val_psnr == doctest::Approx(tr.validate((*data)[0])));
  fs::remove_all(dir);
}
