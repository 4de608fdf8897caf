from pydantic_settings import BaseSettings, SettingsConfigDict

from constants.hounsfield import Hounsfield


class Settings(BaseSettings):
    # Runtime
    WORKERS: int = 1
    LOG_LEVEL: str = "INFO"
    CHECK_FINITE: bool = False

    # Hounsfield thresholds (body mask for MAE/NCC, bone mask for DSC)
    BODY_HU: float = Hounsfield.BODY_THRESHOLD
    BONE_HU: float = Hounsfield.BONE_THRESHOLD

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="DIRFORGE_",
        extra="ignore",
    )

settings = Settings()
