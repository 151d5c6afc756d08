#include <chrono>
#include <cstdio>

#include "eqdenoise/kernels.hpp"
#include "eqdenoise/rng.hpp"

using namespace eqd;
using Clock = std::chrono::steady_clock;

namespace {

Tensor random_tensor(const Shape& s, Rng& rng) {
    Tensor t(s);
    for (double& v : t.data) v = rng.normal();
    return t;
}

template <typename F>
double time_ms(F&& fn, int reps) {
    fn();  // warm-up
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main() {
    Rng rng = Rng::stream(7, "bench");
    struct Case {
        int c_in, c_out, n, p;
    };
    const Case cases[] = {{8, 8, 64, 3}, {16, 16, 128, 3}, {32, 32, 128, 5}, {64, 64, 64, 3}};
    const int reps = 5;

    std::printf("%-22s %10s %10s %8s %10s\n", "case", "serial ms", "omp ms", "speedup",
                "max |diff|");
    for (const Case& c : cases) {
        Tensor in = random_tensor({c.c_in, c.n, c.n}, rng);
        Tensor ker = random_tensor({c.c_out, c.c_in, c.p, c.p}, rng);
        const int pad = (c.p - 1) / 2;
        Tensor out_s({c.c_out, c.n, c.n}), out_p({c.c_out, c.n, c.n});

        const double ts = time_ms(
            [&] { kernels::conv2d_forward_serial(in, ker, 1, pad, out_s); }, reps);
        const double tp =
            time_ms([&] { kernels::conv2d_forward_omp(in, ker, 1, pad, out_p); }, reps);

        double diff = 0.0;
        for (long long i = 0; i < out_s.size(); ++i)
            diff = std::max(diff, std::fabs(out_s[i] - out_p[i]));

        char label[64];
        std::snprintf(label, sizeof(label), "conv %dx%d c%d->%d p%d", c.n, c.n, c.c_in, c.c_out,
                      c.p);
        std::printf("%-22s %10.3f %10.3f %7.2fx %10.2e\n", label, ts, tp, ts / tp, diff);
    }
    return 0;
}
