#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "senseflow/camera.hpp"
#include "senseflow/dense_map.hpp"
#include "senseflow/error.hpp"
#include "senseflow/parallel.hpp"
#include "senseflow/pyramid.hpp"
#include "senseflow/se3.hpp"
#include "test_util.hpp"

using namespace senseflow;

namespace {

Twist random_twist(std::mt19937_64& rng, double scale = 1.0)
{
    std::uniform_real_distribution<double> u(-scale, scale);
    Twist t;
    for (int i = 0; i < 6; ++i) t[i] = u(rng);
    return t;
}

const StereoCamera kCam{720.0, 710.0, 600.0, 170.0, 0.54};

} // namespace

TEST(DenseMap, LayoutIsRowMajorInterleaved)
{
    DenseMap m(2, 3, 2);
    EXPECT_EQ(m.size(), 12u);
    m.at(1, 2, 1) = 7.0;
    EXPECT_EQ(m.values()[(1 * 3 + 2) * 2 + 1], 7.0);
    EXPECT_EQ(m.pixel(1, 2)[1], 7.0);
}

TEST(DenseMap, RejectsLengthMismatch)
{
    EXPECT_THROW(DenseMap(2, 2, 1, std::vector<double>(3)), ShapeError);
    EXPECT_THROW(DenseMap(2, 2, 0), ShapeError);
}

TEST(DenseMap, FiniteCheck)
{
    DenseMap m(2, 2, 1);
    EXPECT_TRUE(m.all_finite());
    m.at(1, 1) = std::nan("");
    EXPECT_FALSE(m.all_finite());
}

TEST(TypedMaps, ChannelCountsAreEnforced)
{
    EXPECT_THROW(FlowField(DenseMap(2, 2, 1)), ShapeError);
    EXPECT_THROW(DisparityMap(DenseMap(2, 2, 2)), ShapeError);
    EXPECT_NO_THROW(FlowField(DenseMap(2, 2, 2)));
}

TEST(TypedMaps, OcclusionRange)
{
    EXPECT_THROW(OcclusionMask(DenseMap(1, 2, 1, 1.5)), DomainError);
    EXPECT_THROW(OcclusionMask(1, 1, -0.1), DomainError);
    EXPECT_NO_THROW(OcclusionMask(DenseMap(1, 2, 1, 1.0)));
}

TEST(TypedMaps, ValidityIsBinary)
{
    EXPECT_THROW(ValidityMask(DenseMap(1, 2, 1, 0.5)), DomainError);
    ValidityMask v(2, 3, 1.0);
    v.at(0, 1) = 0.0;
    EXPECT_EQ(v.count(), 5u);
}

TEST(TypedMaps, PosteriorSumsToOne)
{
    DenseMap m(1, 1, 3, std::vector<double>{0.2, 0.3, 0.5});
    EXPECT_NO_THROW(SegPosterior{m});
    m.at(0, 0, 2) = 0.5 + 2e-5;
    EXPECT_THROW(SegPosterior{m}, DomainError);
    m.at(0, 0, 2) = 0.5 + 5e-6;
    EXPECT_NO_THROW(SegPosterior{m});
    DenseMap neg(1, 1, 2, std::vector<double>{1.5, -0.5});
    EXPECT_THROW(SegPosterior{neg}, DomainError);
}

TEST(Se3, ExpOfZeroIsIdentity)
{
    const RigidTransform T = se3_exp(Twist::Zero());
    EXPECT_EQ(T.rotation, Mat3::Identity());
    EXPECT_EQ(T.translation, Vec3::Zero());
}

TEST(Se3, QuarterTurnAboutZ)
{
    Twist t = Twist::Zero();
    t[2] = std::numbers::pi / 2;
    const RigidTransform T = se3_exp(t);
    Mat3 expected;
    expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    EXPECT_LT((T.rotation - expected).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT(T.translation.norm(), 1e-15);
}

TEST(Se3, RotationMatchesAngleAxis)
{
    std::mt19937_64 rng(3);
    for (int i = 0; i < 50; ++i) {
        const Twist t = random_twist(rng, 2.0);
        const Vec3 w = t.head<3>();
        const Mat3 R = Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix();
        EXPECT_LT((se3_exp(t).rotation - R).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(Se3, ExpOfNegatedTwistInverts)
{
    std::mt19937_64 rng(11);
    for (int i = 0; i < 100; ++i) {
        const Twist t = random_twist(rng, 1.5);
        const RigidTransform I = se3_exp(t) * se3_exp(-t);
        EXPECT_LT((I.rotation - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT(I.translation.norm(), 1e-10);
    }
}

TEST(Se3, ExpIsOrthonormal)
{
    std::mt19937_64 rng(5);
    for (int i = 0; i < 50; ++i) {
        const RigidTransform T = se3_exp(random_twist(rng, 3.0));
        EXPECT_LT(T.orthonormality_error(), 1e-9);
        EXPECT_NEAR(T.rotation.determinant(), 1.0, 1e-9);
    }
}

TEST(Se3, LogInvertsExp)
{
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i) {
        const Twist t = random_twist(rng, 1.0);
        EXPECT_LT((se3_log(se3_exp(t)) - t).norm(), 1e-10);
    }
    Twist tiny = Twist::Zero();
    tiny << 1e-10, -2e-10, 0, 0.3, -0.2, 0.1;
    EXPECT_LT((se3_log(se3_exp(tiny)) - tiny).norm(), 1e-15);
}

TEST(Se3, SmallAnglesKeepTranslationCoupling)
{
    // t = V v with V = I + W/2 + W^2/6 + O(theta^3)
    for (double theta : {1e-9, 1e-8, 0.99e-4, 1.01e-4, 1e-3}) {
        Twist a = Twist::Zero();
        a << 0.0, 0.0, theta, 1.0, 2.0, 3.0;
        const Vec3 v(1.0, 2.0, 3.0);
        const Mat3 W = skew(Vec3(0.0, 0.0, theta));
        const Vec3 expected = v + 0.5 * W * v + W * W * v / 6.0;
        EXPECT_LT((se3_exp(a).translation - expected).norm(), 1e-15 + std::pow(theta, 3)) << theta;
        EXPECT_LT((se3_log(se3_exp(a)) - a).norm(), 1e-14) << theta;
    }
}

TEST(Se3, ComposeIdentityCases)
{
    const RigidTransform I = se3_compose(RigidTransform::identity(), Twist::Zero());
    EXPECT_EQ(I.rotation, Mat3::Identity());
    EXPECT_EQ(I.translation, Vec3::Zero());

    std::mt19937_64 rng(13);
    const Twist t = random_twist(rng);
    const RigidTransform a = se3_compose(RigidTransform::identity(), t);
    const RigidTransform b = se3_exp(t);
    EXPECT_LT((a.rotation - b.rotation).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((a.translation - b.translation).norm(), 1e-15);
}

TEST(Se3, ComposeActsSequentially)
{
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int i = 0; i < 100; ++i) {
        const RigidTransform a = se3_exp(random_twist(rng));
        const Twist d = random_twist(rng);
        const Vec3 p(u(rng), u(rng), u(rng));
        const Vec3 seq = a.apply(se3_exp(d).apply(p));
        EXPECT_LT((se3_compose(a, d).apply(p) - seq).norm(), 1e-10);
    }
}

TEST(Se3, AdjointConjugatesTwists)
{
    std::mt19937_64 rng(19);
    for (int i = 0; i < 50; ++i) {
        const RigidTransform T = se3_exp(random_twist(rng));
        const Twist d = random_twist(rng, 0.5);
        const RigidTransform lhs = T * se3_exp(d) * T.inverse();
        const RigidTransform rhs = se3_exp(T.adjoint() * d);
        EXPECT_LT((lhs.rotation - rhs.rotation).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((lhs.translation - rhs.translation).norm(), 1e-12);
    }
}

TEST(Camera, PrincipalRayAtUnitDepth)
{
    const Vec3 p = backproject({kCam.cx, kCam.cy}, kCam.fx * kCam.baseline, kCam);
    EXPECT_DOUBLE_EQ(p.x(), 0.0);
    EXPECT_DOUBLE_EQ(p.y(), 0.0);
    EXPECT_DOUBLE_EQ(p.z(), 1.0);

    const Projection q = project(Vec3(0, 0, 1), kCam);
    EXPECT_EQ(q.pixel.x, kCam.cx);
    EXPECT_EQ(q.pixel.y, kCam.cy);
    EXPECT_EQ(q.disparity, kCam.fx * kCam.baseline);
}

TEST(Camera, RoundTrip)
{
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> ux(0, 1242), uy(0, 375), ud(0.5, 200);
    for (int i = 0; i < 1000; ++i) {
        const Pixel x{ux(rng), uy(rng)};
        const double d = ud(rng);
        const Projection q = project(backproject(x, d, kCam), kCam);
        EXPECT_NEAR(q.pixel.x, x.x, 1e-9);
        EXPECT_NEAR(q.pixel.y, x.y, 1e-9);
        EXPECT_NEAR(q.disparity, d, 1e-9 * d);
    }
}

TEST(Camera, DoublingDisparityHalvesDepth)
{
    const Vec3 a = backproject({100.0, 50.0}, 8.0, kCam);
    const Vec3 b = backproject({100.0, 50.0}, 16.0, kCam);
    EXPECT_EQ(b.z(), a.z() / 2);
}

TEST(Camera, ProjectionIsHomogeneous)
{
    const Vec3 p(1.3, -0.4, 7.0);
    const Projection a = project(p, kCam);
    const Projection b = project(2.5 * p, kCam);
    EXPECT_NEAR(a.pixel.x, b.pixel.x, 1e-12);
    EXPECT_NEAR(a.pixel.y, b.pixel.y, 1e-12);
    EXPECT_NEAR(b.disparity, a.disparity / 2.5, 1e-12);
}

TEST(Camera, DomainErrors)
{
    EXPECT_THROW(backproject({1, 1}, 0.0, kCam), DomainError);
    EXPECT_THROW(project(Vec3(0, 0, -1), kCam), DomainError);
    StereoCamera bad = kCam;
    bad.baseline = 0.0;
    EXPECT_THROW(bad.validate(), DomainError);
}

TEST(Camera, InverseDepthCoordinates)
{
    const InverseDepthPoint p = inverse_depth({kCam.cx + kCam.fx, kCam.cy}, kCam.fx * kCam.baseline / 4.0, kCam);
    EXPECT_DOUBLE_EQ(p.u, 1.0);
    EXPECT_DOUBLE_EQ(p.v, 0.0);
    EXPECT_DOUBLE_EQ(p.d, 0.25);
}

TEST(Pyramid, ConstantStaysConstant)
{
    const auto pyr = build_pyramid(DenseMap(9, 7, 2, 3.25), 4);
    ASSERT_EQ(pyr.size(), 4u);
    for (const auto& level : pyr) {
        for (double v : level.values()) EXPECT_EQ(v, 3.25);
    }
    EXPECT_EQ(pyr[1].height(), 5);
    EXPECT_EQ(pyr[1].width(), 4);
}

TEST(Pyramid, BlockMeans)
{
    std::vector<double> v(16);
    for (int i = 0; i < 16; ++i) v[i] = i;
    const auto pyr = build_pyramid(DenseMap(4, 4, 1, v), 2);
    // blocks {0,1,4,5} {2,3,6,7} {8,9,12,13} {10,11,14,15}
    EXPECT_EQ(pyr[1].at(0, 0), 2.5);
    EXPECT_EQ(pyr[1].at(0, 1), 4.5);
    EXPECT_EQ(pyr[1].at(1, 0), 10.5);
    EXPECT_EQ(pyr[1].at(1, 1), 12.5);
}

TEST(Pyramid, MotionUnitsHalve)
{
    const auto pyr = build_pyramid(FlowField(8, 8, 2.0, 0.0), 3, MapKind::Motion);
    EXPECT_EQ(pyr[1].at(2, 3, 0), 1.0);
    EXPECT_EQ(pyr[1].at(2, 3, 1), 0.0);
    EXPECT_EQ(pyr[2].at(1, 1, 0), 0.5);
}

TEST(Pyramid, OddBorderAveragesExistingTaps)
{
    DenseMap m(1, 3, 1, std::vector<double>{1.0, 3.0, 8.0});
    const DenseMap d = downsample(m, MapKind::Intensity);
    ASSERT_EQ(d.width(), 2);
    EXPECT_EQ(d.at(0, 0), 2.0);
    EXPECT_EQ(d.at(0, 1), 8.0);
}

TEST(Pyramid, MaskedAveragesValidChildren)
{
    DenseMap m(2, 2, 1, std::vector<double>{1.0, 100.0, 3.0, 5.0});
    ValidityMask v(DenseMap(2, 2, 1, std::vector<double>{1, 0, 1, 1}));
    const MaskedPyramid p = build_masked_pyramid(m, v, 2);
    EXPECT_EQ(p.maps[1].at(0, 0), 3.0);
    EXPECT_EQ(p.valid[1].at(0, 0), 1.0);

    const MaskedPyramid none = build_masked_pyramid(m, ValidityMask(2, 2, 0.0), 2);
    EXPECT_EQ(none.valid[1].at(0, 0), 0.0);
}

TEST(Pyramid, TooDeep)
{
    EXPECT_THROW(build_pyramid(DenseMap(2, 2, 1), 0), DomainError);
    EXPECT_NO_THROW(build_pyramid(DenseMap(2, 2, 1), 2));
    EXPECT_THROW(build_pyramid(DenseMap(2, 2, 1), 3), DomainError);
}

TEST(Parallel, EnvironmentAndOverride)
{
    set_thread_count(0);
    setenv("SENSEFLOW_THREADS", "3", 1);
    EXPECT_EQ(thread_count(), 3);
    set_thread_count(2);
    EXPECT_EQ(thread_count(), 2);
    set_thread_count(0);
    setenv("SENSEFLOW_THREADS", "0", 1);
    EXPECT_GE(thread_count(), 1);
    unsetenv("SENSEFLOW_THREADS");
}

TEST(Parallel, VisitsEveryChunkOnce)
{
    std::vector<int> hits(1000, 0);
    parallel_for_chunks(hits.size(), [&](std::size_t i) { hits[i] += 1; }, 4);
    for (int h : hits) EXPECT_EQ(h, 1);
}
