from hypothesis import HealthCheck, settings

# the sandbox runs single-core; per-example deadlines just make tests flaky
settings.register_profile(
    "sandbox", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("sandbox")
