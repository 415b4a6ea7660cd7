#include "nsql/core.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <numbers>
#include <thread>

namespace nsql {

double Rng::normal()
{
    if (cached_normal_) {
        const double z = *cached_normal_;
        cached_normal_.reset();
        return z;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_normal_ = radius * std::sin(angle);
    return radius * std::cos(angle);
}

std::size_t Rng::below(std::size_t bound)
{
    if (bound <= 1) {
        return 0;
    }
    // Rejection keeps the draw exactly uniform.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = engine_();
    while (x >= limit) {
        x = engine_();
    }
    return std::size_t(x % bound);
}

std::vector<Index> Rng::permutation(Index n)
{
    std::vector<Index> perm(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        perm[std::size_t(i)] = i;
    }
    shuffle(perm);
    return perm;
}

std::vector<Index> Rng::sample_without_replacement(Index n, Index count)
{
    if (count > n || count < 0) {
        throw InputError("sample_without_replacement: count " + std::to_string(count) +
                         " exceeds population " + std::to_string(n));
    }
    std::vector<Index> pool(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        pool[std::size_t(i)] = i;
    }
    // Partial Fisher-Yates from the front.
    for (Index i = 0; i < count; ++i) {
        const std::size_t j = std::size_t(i) + below(std::size_t(n - i));
        std::swap(pool[std::size_t(i)], pool[j]);
    }
    pool.resize(std::size_t(count));
    return pool;
}

std::string format_double(double value)
{
    char buffer[32];
    const auto result = std::to_chars(buffer, buffer + sizeof buffer, value);
    return std::string(buffer, result.ptr);
}

int worker_count()
{
    if (const char* env = std::getenv("NSQL_THREADS")) {
        const int requested = std::atoi(env);
        if (requested > 0) {
            return requested;
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : int(hw);
}

void parallel_for(Index n, const std::function<void(Index, Index)>& body)
{
    if (n <= 0) {
        return;
    }
    const Index workers = std::min<Index>(worker_count(), n);
    if (workers <= 1) {
        body(0, n);
        return;
    }
    const Index chunk = (n + workers - 1) / workers;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    {
        std::vector<std::jthread> threads;
        threads.reserve(std::size_t(workers));
        std::size_t slot = 0;
        for (Index begin = 0; begin < n; begin += chunk, ++slot) {
            const Index end = std::min(n, begin + chunk);
            threads.emplace_back([&body, &errors, slot, begin, end] {
                try {
                    body(begin, end);
                } catch (...) {
                    errors[slot] = std::current_exception();
                }
            });
        }
    }
    // Lowest chunk wins so the reported error does not depend on timing.
    for (const auto& error : errors) {
        if (error) {
            std::rethrow_exception(error);
        }
    }
}

} // namespace nsql
