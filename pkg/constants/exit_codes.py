class ExitCode:
    SUCCESS = 0
    USAGE_ERROR = 1
    DATA_ERROR = 2
    INTERNAL_ERROR = 3
