#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <rtl/commands.hpp>
#include <rtl/synthdata.hpp>
#include <rtl/trainer.hpp>
#include <vector>

using namespace rtl;

namespace {
Model<float>* const no_teacher = nullptr;
}  // namespace

namespace {

// Small in-memory dataset: random images, aligned landmarks, two classes.
Dataset tiny_dataset(std::uint64_t seed) {
    Dataset ds;
    ds.manifest.variant = "faces";
    ds.manifest.n = 8;
    ds.manifest.image_size = 32;
    ds.manifest.k = 2;
    ds.manifest.c = 2;
    ds.manifest.seed = seed;
    ds.manifest.train = {0, 1, 2, 3, 4, 5};
    ds.manifest.val = {6};
    ds.manifest.test = {7};
    ds.manifest.channel_mean = {0.5, 0.5, 0.5};
    ds.manifest.channel_std = {0.25, 0.25, 0.25};
    ds.manifest.flip_permutation = {1, 0};
    Rng rng(seed);
    for (std::size_t i = 0; i < ds.manifest.n; ++i) {
        ImageU8 img;
        img.w = img.h = 32;
        img.rgb.resize(32 * 32 * 3);
        for (auto& b : img.rgb) b = static_cast<std::uint8_t>(rng.below(256));
        ds.images.push_back(std::move(img));
        const double x = 4.0 * static_cast<double>(1 + rng.below(6));
        const double y = 4.0 * static_cast<double>(1 + rng.below(6));
        ds.landmarks.push_back({{x, y}, {31.0 - x, y}});
        ds.labels.push_back(static_cast<int>(i % 2));
    }
    return ds;
}

ModelConfig tiny_student(std::uint64_t seed) {
    ModelConfig mc;
    mc.h = mc.w = 32;
    mc.stage_widths = {2, 3, 4, 5};
    mc.c = 2;
    mc.k = 2;
    mc.deconv_channels = 4;
    mc.seed = seed;
    return mc;
}

TrainConfig fast_cfg(std::uint64_t seed) {
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 3;
    tc.seed = seed;
    tc.flip_prob = 0.5;
    return tc;
}

bool histories_identical(const std::vector<HistoryRow>& a, const std::vector<HistoryRow>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].epoch != b[i].epoch || a[i].lr != b[i].lr || a[i].train_loss != b[i].train_loss ||
            a[i].val_loss != b[i].val_loss || a[i].terms.regression != b[i].terms.regression ||
            a[i].terms.co != b[i].terms.co || a[i].terms.eo != b[i].terms.eo ||
            a[i].terms.sam != b[i].terms.sam || a[i].terms.cam != b[i].terms.cam ||
            a[i].terms.total != b[i].terms.total)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("adam first step: hand-applied update equations") {
    TrainConfig tc;
    tc.weight_decay = 0.0;
    Adam<double> opt(tc);
    auto p = make_var(Tensor<double>({1}, {1.0}), true);
    p->ensure_grad();
    p->grad[0] = 2.0;
    std::vector<std::pair<std::string, VarPtr<double>>> params = {{"p", p}};
    opt.step(params, 0.001);
    // mhat = g, vhat = g^2 -> update = lr * g/(|g|+eps) ~ lr
    CHECK(p->value[0] == doctest::Approx(0.999).epsilon(1e-6));
    CHECK(opt.steps_taken() == 1);
}

TEST_CASE("adam: zero gradient with zero decay leaves parameters unchanged") {
    TrainConfig tc;
    tc.weight_decay = 0.0;
    Adam<double> opt(tc);
    auto p = make_var(Tensor<double>({2}, {1.5, -2.5}), true);
    p->ensure_grad();
    std::vector<std::pair<std::string, VarPtr<double>>> params = {{"p", p}};
    opt.step(params, 0.01);
    CHECK(p->value[0] == 1.5);
    CHECK(p->value[1] == -2.5);
}

TEST_CASE("adam: frozen parameters are skipped bit-identically") {
    TrainConfig tc;
    Adam<double> opt(tc);
    auto p = make_var(Tensor<double>({1}, {3.25}), false);
    p->ensure_grad();
    p->grad[0] = 7.0;
    std::vector<std::pair<std::string, VarPtr<double>>> params = {{"p", p}};
    opt.step(params, 0.1);
    CHECK(p->value[0] == 3.25);
}

TEST_CASE("adam: coupled weight decay acts as an additive L2 gradient") {
    TrainConfig tc;
    tc.weight_decay = 0.1;
    Adam<double> opt(tc);
    auto p = make_var(Tensor<double>({1}, {1.0}), true);
    p->ensure_grad();  // zero gradient; decay alone drives the step
    std::vector<std::pair<std::string, VarPtr<double>>> params = {{"p", p}};
    opt.step(params, 0.001);
    // g' = wd*w = 0.1 -> update = lr * 0.1/(0.1+eps) ~ lr
    CHECK(p->value[0] == doctest::Approx(0.999).epsilon(1e-6));
}

TEST_CASE("adam rejects non-finite gradients") {
    TrainConfig tc;
    Adam<double> opt(tc);
    auto p = make_var(Tensor<double>({1}, {1.0}), true);
    p->ensure_grad();
    p->grad[0] = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::pair<std::string, VarPtr<double>>> params = {{"p", p}};
    CHECK_THROWS_AS(opt.step(params, 0.001), Error);
}

TEST_CASE("polynomial decay schedule") {
    TrainConfig tc;
    tc.lr0 = 0.001;
    tc.decay_power = 1.0;
    CHECK(lr_at(0, 1000, tc) == doctest::Approx(0.001).epsilon(1e-12));
    CHECK(lr_at(500, 1000, tc) == doctest::Approx(0.0005).epsilon(1e-12));
    tc.decay_power = 0.9;
    CHECK(lr_at(999, 1000, tc) == doctest::Approx(0.001 * std::pow(0.001, 0.9)).epsilon(1e-9));
    CHECK(lr_at(999, 1000, tc) == doctest::Approx(1.9953e-6).epsilon(1e-3));
    // strictly positive and non-increasing
    double prev = 1.0;
    for (std::size_t s = 0; s < 100; ++s) {
        const double v = lr_at(s, 100, tc);
        CHECK(v > 0.0);
        CHECK(v <= prev);
        prev = v;
    }
    CHECK_THROWS_AS(lr_at(1000, 1000, tc), Error);
}

TEST_CASE("augmentation: flip maps x to W-1-x and reindexes by the permutation") {
    Tensor<float> img({4, 256, 3});
    Rng fill(9);
    for (std::size_t i = 0; i < img.numel(); ++i) img[i] = static_cast<float>(fill.uniform01());
    Landmarks lms = {{100.0, 2.0}, {10.0, 1.0}};
    TrainConfig tc;
    tc.flip_prob = 1.0;
    tc.scale_lo = tc.scale_hi = 1.0;
    Rng rng(1234);
    auto out = augment(img, lms, {1, 0}, tc, rng);
    // landmark 0 takes the mirrored partner (index 1): x = 255-10 = 245
    CHECK(out.landmarks[0].x == doctest::Approx(245.0).epsilon(1e-12));
    CHECK(out.landmarks[0].y == 1.0);
    CHECK(out.landmarks[1].x == doctest::Approx(155.0).epsilon(1e-12));
    // pixel mirror: (y,x) now holds original (y, W-1-x)
    CHECK(out.image[(0 * 256 + 0) * 3 + 0] == img[(0 * 256 + 255) * 3 + 0]);

    // flipping the result again restores the original exactly
    Rng rng2(999);
    auto back = augment(out.image, out.landmarks, {1, 0}, tc, rng2);
    for (std::size_t i = 0; i < lms.size(); ++i) {
        CHECK(back.landmarks[i].x == doctest::Approx(lms[i].x).epsilon(1e-12));
        CHECK(back.landmarks[i].y == doctest::Approx(lms[i].y).epsilon(1e-12));
    }
    for (std::size_t i = 0; i < img.numel(); ++i) REQUIRE(back.image[i] == img[i]);
}

TEST_CASE("augmentation: identity scale and no flip change nothing") {
    Tensor<float> img({8, 8, 3});
    Rng fill(10);
    for (std::size_t i = 0; i < img.numel(); ++i) img[i] = static_cast<float>(fill.uniform01());
    Landmarks lms = {{3.0, 4.0}};
    TrainConfig tc;
    tc.flip_prob = 0.0;
    tc.scale_lo = tc.scale_hi = 1.0;
    Rng rng(77);
    auto out = augment(img, lms, {0}, tc, rng);
    for (std::size_t i = 0; i < img.numel(); ++i) REQUIRE(out.image[i] == img[i]);
    CHECK(out.landmarks[0].x == 3.0);
    CHECK(out.landmarks[0].y == 4.0);
}

TEST_CASE("augmentation: impossible scales fall back to no scaling after 10 attempts") {
    Tensor<float> img({32, 32, 3});
    Landmarks lms = {{0.5, 16.0}};  // near the left edge; doubling pushes it out
    TrainConfig tc;
    tc.flip_prob = 0.0;
    tc.scale_lo = tc.scale_hi = 2.0;
    Rng rng(5);
    auto out = augment(img, lms, {0}, tc, rng);
    CHECK(out.landmarks[0].x == 0.5);
    CHECK(out.landmarks[0].y == 16.0);
    for (std::size_t i = 0; i < img.numel(); ++i) REQUIRE(out.image[i] == img[i]);
}

TEST_CASE("augmentation: scaling moves landmarks about the center consistently") {
    Tensor<float> img({32, 32, 3});
    Landmarks lms = {{20.0, 10.0}};
    TrainConfig tc;
    tc.flip_prob = 0.0;
    tc.scale_lo = tc.scale_hi = 1.1;  // always accepted
    Rng rng(6);
    auto out = augment(img, lms, {0}, tc, rng);
    const double c = 15.5;
    CHECK(out.landmarks[0].x == doctest::Approx(c + (20.0 - c) * 1.1).epsilon(1e-12));
    CHECK(out.landmarks[0].y == doctest::Approx(c + (10.0 - c) * 1.1).epsilon(1e-12));
}

TEST_CASE("augmentation rejects a permutation that does not cover the landmarks") {
    Tensor<float> img({8, 8, 3});
    Landmarks lms = {{1.0, 1.0}, {2.0, 2.0}};
    TrainConfig tc;
    tc.flip_prob = 1.0;
    Rng rng(8);
    CHECK_THROWS_AS(augment(img, lms, {0}, tc, rng), Error);
}

TEST_CASE("training is deterministic and tracks the best validation epoch") {
    Dataset ds = tiny_dataset(42);
    auto m1 = Model<float>::build(tiny_student(7));
    auto m2 = Model<float>::build(tiny_student(7));
    TrainConfig tc = fast_cfg(11);
    auto r1 = train(m1, no_teacher, ds, tc);
    auto r2 = train(m2, no_teacher, ds, tc);
    CHECK(histories_identical(r1.history, r2.history));
    REQUIRE(r1.history.size() == tc.epochs);

    // epoch indices 1-based, learning rate non-increasing
    for (std::size_t i = 0; i < r1.history.size(); ++i) CHECK(r1.history[i].epoch == i + 1);
    for (std::size_t i = 1; i < r1.history.size(); ++i) CHECK(r1.history[i].lr <= r1.history[i - 1].lr);

    // best epoch is the argmin of the validation loss (first strict minimum)
    double best = r1.history[0].val_loss;
    std::size_t best_epoch = 1;
    for (const auto& row : r1.history)
        if (row.val_loss < best) {
            best = row.val_loss;
            best_epoch = row.epoch;
        }
    CHECK(r1.best_epoch == best_epoch);
    CHECK(r1.best_val_loss == best);

    // both models hold identical (best-epoch) weights afterwards
    for (std::size_t i = 0; i < m1.params().size(); ++i) {
        const auto& a = m1.params()[i].second->value;
        const auto& b = m2.params()[i].second->value;
        for (std::size_t j = 0; j < a.numel(); ++j) REQUIRE(a[j] == b[j]);
    }
}

TEST_CASE("zero-weight regularizers reduce to plain fine-tuning bit-identically") {
    Dataset ds = tiny_dataset(43);
    auto teacher = Model<float>::build(tiny_student(99));
    auto plain_model = Model<float>::build(tiny_student(3));
    auto zero_model = Model<float>::build(tiny_student(3));

    TrainConfig plain = fast_cfg(21);
    auto r_plain = train(plain_model, &teacher, ds, plain);

    TrainConfig zero = fast_cfg(21);
    zero.reg.active = {RegTerm::EO};
    zero.reg.lambda[RegTerm::EO] = 0.0;
    auto r_zero = train(zero_model, &teacher, ds, zero);

    CHECK(histories_identical(r_plain.history, r_zero.history));
    for (std::size_t i = 0; i < plain_model.params().size(); ++i) {
        const auto& a = plain_model.params()[i].second->value;
        const auto& b = zero_model.params()[i].second->value;
        for (std::size_t j = 0; j < a.numel(); ++j) REQUIRE(a[j] == b[j]);
    }
}

TEST_CASE("an active constraint changes the trajectory and leaves the teacher untouched") {
    Dataset ds = tiny_dataset(44);
    auto teacher = Model<float>::build(tiny_student(99));
    // a briefly trained classifier gives non-degenerate embeddings/attention
    pretrain_classifier(teacher, ds, 10, 3, 7);
    std::vector<Tensor<float>> teacher_before;
    for (const auto& [name, p] : teacher.params()) teacher_before.push_back(p->value);

    auto plain_model = Model<float>::build(tiny_student(3));
    auto reg_model = Model<float>::build(tiny_student(3));
    init_student_from_teacher(plain_model, teacher);
    init_student_from_teacher(reg_model, teacher);
    TrainConfig plain = fast_cfg(21);
    auto r_plain = train(plain_model, &teacher, ds, plain);
    TrainConfig withreg = fast_cfg(21);
    // CO stays well-defined even when a tiny embedding goes all-zero,
    // which EO/SAM rightly reject as degenerate at this toy scale.
    withreg.reg.active = {RegTerm::CO};
    withreg.reg.lambda[RegTerm::CO] = 0.5;
    auto r_reg = train(reg_model, &teacher, ds, withreg);

    CHECK_FALSE(histories_identical(r_plain.history, r_reg.history));
    // the regularized history logs nonzero raw term values
    bool any_co = false;
    for (const auto& row : r_reg.history) any_co |= row.terms.co != 0.0;
    CHECK(any_co);

    std::size_t i = 0;
    for (const auto& [name, p] : teacher.params()) {
        const auto& before = teacher_before[i++];
        for (std::size_t j = 0; j < before.numel(); ++j) REQUIRE(p->value[j] == before[j]);
    }
}

TEST_CASE("active regularizers without a teacher are rejected") {
    Dataset ds = tiny_dataset(45);
    auto m = Model<float>::build(tiny_student(5));
    TrainConfig tc = fast_cfg(1);
    tc.reg.active = {RegTerm::SAM};
    tc.reg.lambda[RegTerm::SAM] = 0.1;
    CHECK_THROWS_AS(train(m, no_teacher, ds, tc), Error);
}

TEST_CASE("frozen-encoder training keeps every encoder weight bit-identical") {
    Dataset ds = tiny_dataset(46);
    auto m = Model<float>::build(tiny_student(12));
    std::vector<std::pair<std::string, Tensor<float>>> before;
    for (const auto& [name, p] : m.params()) before.emplace_back(name, p->value);
    TrainConfig tc = fast_cfg(31);
    tc.freeze = FreezePolicy::FE;
    train(m, no_teacher, ds, tc);
    bool decoder_changed = false;
    std::size_t i = 0;
    for (const auto& [name, p] : m.params()) {
        const auto& old = before[i++].second;
        if (name.rfind("encoder.", 0) == 0) {
            for (std::size_t j = 0; j < old.numel(); ++j) REQUIRE(p->value[j] == old[j]);
        } else {
            for (std::size_t j = 0; j < old.numel(); ++j)
                if (p->value[j] != old[j]) decoder_changed = true;
        }
    }
    CHECK(decoder_changed);
}

TEST_CASE("subset restricts the pool of training samples") {
    Dataset ds = tiny_dataset(47);
    auto a = Model<float>::build(tiny_student(8));
    auto b = Model<float>::build(tiny_student(8));
    TrainConfig tc = fast_cfg(41);
    tc.subset = 3;
    auto ra = train(a, no_teacher, ds, tc);
    TrainConfig full = fast_cfg(41);
    auto rb = train(b, no_teacher, ds, full);
    CHECK_FALSE(histories_identical(ra.history, rb.history));
    TrainConfig toobig = fast_cfg(41);
    toobig.subset = 100;
    auto c = Model<float>::build(tiny_student(8));
    CHECK_THROWS_AS(train(c, no_teacher, ds, toobig), Error);
}

TEST_CASE("config validation rejects malformed training settings") {
    TrainConfig tc;
    tc.lr0 = 0.0;
    CHECK_THROWS_AS(tc.validate(), Error);
    tc = TrainConfig{};
    tc.flip_prob = 1.5;
    CHECK_THROWS_AS(tc.validate(), Error);
    tc = TrainConfig{};
    tc.scale_lo = 1.5;
    tc.scale_hi = 1.0;
    CHECK_THROWS_AS(tc.validate(), Error);
    tc = TrainConfig{};
    tc.sigma = 0.0;
    CHECK_THROWS_AS(tc.validate(), Error);
    tc = TrainConfig{};
    tc.decay_power = 0.0;
    CHECK_THROWS_AS(tc.validate(), Error);
}

TEST_CASE("sixty-epoch smoke training halves the train loss on a 50-image split") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "rtl_trainer_smoke";
    fs::remove_all(dir);
    generate_dataset(dir.string(), 72, 64, 4, 20260815, DatasetVariant::faces);
    Dataset ds = load_dataset(dir.string());
    REQUIRE(ds.manifest.train.size() == 50);

    ModelConfig mc;
    mc.h = mc.w = 64;
    mc.stage_widths = {4, 6, 8, 10};
    mc.c = 0;  // plain fine-tuning needs no classifier branch
    mc.k = 14;
    mc.deconv_channels = 8;
    mc.seed = 5;
    auto m = Model<float>::build(mc);

    TrainConfig tc;
    tc.epochs = 60;
    tc.batch_size = 10;
    tc.seed = 17;
    auto r = train(m, no_teacher, ds, tc);
    REQUIRE(r.history.size() == 60);
    CHECK(r.history.back().train_loss < 0.5 * r.history.front().train_loss);
    fs::remove_all(dir);
}

TEST_CASE("classifier pretraining learns the tiny dataset far beyond chance") {
    Dataset ds = tiny_dataset(48);
    auto m = Model<float>::build(tiny_student(31));
    const double acc = pretrain_classifier(m, ds, 30, 3, 123);
    CHECK(acc >= 2.0 / 2.0 * 0.5);  // at least chance on two classes...
    CHECK(acc > 0.5);               // ...and strictly above it
    // model with no classifier branch is rejected
    ModelConfig nc = tiny_student(31);
    nc.c = 0;
    auto headless = Model<float>::build(nc);
    CHECK_THROWS_AS(pretrain_classifier(headless, ds, 1, 2, 1), Error);
    // class-count mismatch is rejected
    ModelConfig wrong = tiny_student(31);
    wrong.c = 4;
    auto wrong_model = Model<float>::build(wrong);
    CHECK_THROWS_AS(pretrain_classifier(wrong_model, ds, 1, 2, 1), Error);
}
