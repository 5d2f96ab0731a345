#include <gtest/gtest.h>

#include <viewfill/config.hpp>
#include <viewfill/geometry.hpp>
#include <viewfill/inpaint.hpp>
#include <viewfill/io.hpp>
#include <viewfill/metrics.hpp>
#include <viewfill/parallel.hpp>
#include <viewfill/pipeline.hpp>
#include <viewfill/planner.hpp>
#include <viewfill/projection.hpp>
#include <viewfill/qnet.hpp>
#include <viewfill/rng.hpp>
#include <viewfill/scenegen.hpp>
#include <viewfill/volume.hpp>
#include <viewfill/voxel_grid.hpp>

TEST(Smoke, HeadersCompileAndDefaultsValidate) {
  viewfill::Config cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(viewfill::kActionViewCount, 20);
}
