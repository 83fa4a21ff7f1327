from hypothesis import HealthCheck, settings

# compiled kernels make the first example slow; deadlines would only measure JIT time
settings.register_profile("mixlab", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("mixlab")
