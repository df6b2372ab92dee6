from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # planner
    dt: float = 0.1
    d_min: float = 1.0
    a_des: float = 1.0
    w_change: float = 10.0
    w_profile: float = 1.0
    w_safe: float = 0.0
    safe_time_gap: float = 1.0
    min_lateral_width: float = 0.0
    lateral_margin: float = 0.25
    time_budget: float = 10.0

    # vehicle (configuration defaults, not measured values)
    vehicle_length: float = 4.5
    vehicle_width: float = 2.0
    wheelbase: float = 2.6
    a_max: float = 6.0
    s_max: float = 0.7

    # tracking controller
    k_v: float = 1.5
    k_xi: float = 0.5
    lookahead_min: float = 3.0
    lookahead_gain: float = 0.5

    # closed-loop simulation
    sim_dt: float = 0.01
    plan_horizon: float = 3.0
    replan_period: float = 0.3

    # output
    output_dir: str = "out"
    svg_scale: float = 10.0
    log_level: str = "INFO"
    service_title: str = "CorridorPlanner"

    model_config = {"env_file": ".env", "env_file_encoding": "utf-8"}


settings = Settings()
