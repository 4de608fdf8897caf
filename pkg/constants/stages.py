class Stages:
    GLOBAL = "global"
    LOCAL = "local"

    ALL = (GLOBAL, LOCAL)


class Roles:
    GENERATOR = "generator"
    DISCRIMINATOR = "discriminator"

    ALL = (GENERATOR, DISCRIMINATOR)
