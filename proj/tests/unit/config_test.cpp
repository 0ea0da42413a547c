#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "huvr/config/run_config.hpp"
#include "huvr/data/image.hpp"
#include "huvr/error.hpp"

using namespace huvr;
using config::RunConfig;

namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("huvr_config_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Schema, SortedUniqueAndDefaultsCanonical) {
  const auto& s = config::schema();
  ASSERT_FALSE(s.empty());
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LT(s[i - 1].key, s[i].key);
  RunConfig rc;
  for (const auto& k : s) {
    RunConfig copy = rc;
    copy.set(k.key, rc.get(k.key));
    EXPECT_EQ(copy.get(k.key), rc.get(k.key)) << k.key;
  }
}

TEST(RunConfig, DefaultsMatchLibraryDefaults) {
  RunConfig rc;
  const auto m = config::model_config(rc);
  const auto desk = hypernet::HuvrConfig::desk();
  EXPECT_EQ(m.image_size, desk.image_size);
  EXPECT_EQ(m.patch_size, desk.patch_size);
  EXPECT_EQ(m.d_vit, desk.d_vit);
  EXPECT_EQ(m.n_enc_blocks, desk.n_enc_blocks);
  EXPECT_EQ(m.d_t, desk.d_t);
  EXPECT_EQ(m.d_dec, desk.d_dec);
  EXPECT_EQ(m.variant, desk.variant);
  EXPECT_EQ(m.inr.pos_dim, desk.inr.pos_dim);
  EXPECT_EQ(m.inr.mlp_dim, desk.inr.mlp_dim);
  EXPECT_EQ(m.inr.coord_stride, desk.inr.coord_stride);
  EXPECT_EQ(m.inr.modulated_layer, desk.inr.modulated_layer);
  EXPECT_EQ(m.distill.alpha, desk.distill.alpha);

  const auto t = config::train_config(rc);
  const trainer::TrainConfig d;
  EXPECT_EQ(t.lr_base, d.lr_base);
  EXPECT_EQ(t.batch_size, d.batch_size);
  EXPECT_EQ(t.clip_norm, d.clip_norm);
  EXPECT_EQ(t.weight_decay, d.weight_decay);
  EXPECT_EQ(t.warmup_epochs, d.warmup_epochs);
  EXPECT_EQ(t.crop.scale_min, d.crop.scale_min);
  EXPECT_EQ(t.crop.ratio_max, d.crop.ratio_max);
  EXPECT_EQ(t.loss.lambda_ssim, d.loss.lambda_ssim);
}

TEST(RunConfig, PrecedenceDefaultsFileOverride) {
  RunConfig rc;
  EXPECT_EQ(rc.get("train.batch_size"), "16");
  rc.merge_text("train.batch_size = 4\ntrain.epochs = 3\n", "file");
  EXPECT_EQ(rc.get("train.batch_size"), "4");
  rc.set_assignment("train.batch_size=2");
  EXPECT_EQ(rc.get("train.batch_size"), "2");
  EXPECT_EQ(rc.get("train.epochs"), "3");
  EXPECT_EQ(rc.get("train.clip_norm"), "0.01");
}

TEST(RunConfig, CommentsWhitespaceAndBooleans) {
  RunConfig rc;
  rc.merge_text("# header\n\n  train.augment =  off   # trailing\nmodel.rope=0\r\nmodel.variant = patchwise_copy\n");
  EXPECT_FALSE(rc.get_bool("train.augment"));
  EXPECT_FALSE(rc.get_bool("model.rope"));
  EXPECT_EQ(config::model_config(rc).variant, hypernet::Variant::patchwise_copy);
}

TEST(RunConfig, RejectsUnknownRepeatedAndMalformed) {
  RunConfig rc;
  EXPECT_THROW(rc.set("train.bogus", "1"), ConfigError);
  EXPECT_THROW(rc.set_assignment("no_equals_sign"), ConfigError);
  EXPECT_THROW(rc.merge_text("seed=1\nseed=2\n"), ConfigError);
  EXPECT_THROW(rc.merge_text("just words\n"), ConfigError);
  EXPECT_THROW(rc.set("train.batch_size", "-1"), ConfigError);
  EXPECT_THROW(rc.set("train.batch_size", "1.5"), ConfigError);
  EXPECT_THROW(rc.set("train.batch_size", ""), ConfigError);
  EXPECT_THROW(rc.set("train.lr_base", "abc"), ConfigError);
  EXPECT_THROW(rc.set("train.lr_base", "inf"), ConfigError);
  EXPECT_THROW(rc.set("train.augment", "maybe"), ConfigError);
  EXPECT_THROW(rc.set("model.variant", "plus_everything"), ConfigError);
  EXPECT_THROW(rc.set("data.dir", "a\nb"), ConfigError);
  // a failed set leaves the old value
  EXPECT_EQ(rc.get("train.batch_size"), "16");
}

TEST(RunConfig, ErrorNamesOriginAndLine) {
  RunConfig rc;
  try {
    rc.merge_text("seed = 1\n\nmodel.nope = 3\n", "run.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("run.cfg:3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("model.nope"), std::string::npos);
  }
}

TEST(RunConfig, CanonicalTextRoundTripsBitwise) {
  RunConfig rc;
  const double odd = 0.1 + 0.2;  // not representable in a short decimal
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", odd);
  rc.set("train.lr_base", buf);
  rc.set("teacher.gain", "1e-3");
  rc.set("data.dir", "/some/where");
  const std::string text = rc.canonical_text();
  RunConfig back = RunConfig::parse(text);
  EXPECT_TRUE(back == rc);
  EXPECT_EQ(back.canonical_text(), text);
  const double got = back.get_real("train.lr_base");
  EXPECT_EQ(std::memcmp(&got, &odd, sizeof got), 0);
  EXPECT_EQ(back.get_real("teacher.gain"), 1e-3);
  // one line per schema key, sorted
  std::size_t lines = 0;
  for (char ch : text) lines += ch == '\n';
  EXPECT_EQ(lines, config::schema().size());
}

TEST(RunConfig, ModelValidationSurfaces) {
  RunConfig rc;
  rc.set("model.patch_size", "5");
  EXPECT_THROW(config::model_config(rc), ConfigError);
  RunConfig rc2;
  rc2.set("train.clip_norm", "0");
  EXPECT_THROW(config::train_config(rc2), ConfigError);
}

TEST(RunConfig, DerivedInrFields) {
  RunConfig rc;
  rc.set("model.patch_size", "4");
  rc.set("model.inr.coord_stride", "2");
  const auto m = config::model_config(rc);
  EXPECT_EQ(m.inr.patch_size, 4u);
  EXPECT_EQ(m.inr.upscale_factor, 2u);
}

TEST(LoadData, ShapesSplit) {
  RunConfig rc;
  rc.merge_text("data.shapes_count = 20\ndata.n_train = 15\nmodel.image_size = 16\nmodel.patch_size = 4\n");
  auto d = config::load_data(rc);
  EXPECT_EQ(d.train.size(), 15u);
  EXPECT_EQ(d.val.size(), 5u);
  EXPECT_EQ(d.train.images[0].height(), 16u);
  rc.set("data.n_train", "0");
  d = config::load_data(rc);
  EXPECT_EQ(d.train.size(), 20u);
  EXPECT_EQ(d.val.size(), 0u);
  rc.set("data.n_train", "21");
  EXPECT_THROW(config::load_data(rc), DataError);
}

TEST(LoadData, DirectoryMissingAndSizeMismatch) {
  auto dir = temp_dir("dir");
  RunConfig rc;
  rc.set("data.source", "dir");
  EXPECT_THROW(config::load_data(rc), ConfigError);  // no data.dir
  rc.set("data.dir", (dir / "absent").string());
  try {
    config::load_data(rc);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("absent"), std::string::npos);
  }
  auto shapes = data::synth_shapes({4, 16, 2, 0});
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    fs::create_directories(dir / "imgs" / shapes.class_names[shapes.labels[i]]);
    data::save_png(dir / "imgs" / shapes.class_names[shapes.labels[i]] / ("i" + std::to_string(i) + ".png"),
                   shapes.images[i].pixels);
  }
  rc.set("data.dir", (dir / "imgs").string());
  rc.set("data.n_train", "3");
  EXPECT_THROW(config::load_data(rc), DataError);  // 16x16 images, model expects 32
  rc.set("model.image_size", "16");
  rc.set("model.patch_size", "4");
  auto d = config::load_data(rc);
  EXPECT_EQ(d.train.size(), 3u);
  EXPECT_EQ(d.val.size(), 1u);
  rc.set("data.val_dir", (dir / "imgs").string());
  d = config::load_data(rc);
  EXPECT_EQ(d.train.size(), 4u);
  EXPECT_EQ(d.val.size(), 4u);
}

TEST(MakeTeacher, SourcesAndDims) {
  RunConfig rc;
  rc.set("teacher.source", "none");
  EXPECT_EQ(config::make_teacher(rc), nullptr);
  rc.set("teacher.source", "random");
  rc.set("model.distill.teacher_dim", "12");
  auto t = config::make_teacher(rc);
  ASSERT_NE(t, nullptr);
  EXPECT_EQ(t->dim(), 12u);
  EXPECT_EQ(t->patch_count(), 16u);
  rc.set("teacher.source", "file");
  EXPECT_THROW(config::make_teacher(rc), ConfigError);
}
