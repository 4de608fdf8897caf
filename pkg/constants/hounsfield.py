class Hounsfield:
    AIR = -1000.0
    WATER = 0.0

    # Default mask thresholds (body for MAE/NCC, bone for DSC)
    BODY_THRESHOLD = -300.0
    BONE_THRESHOLD = 300.0

    # Phantom tissue levels
    LIVER = 60.0
    BONE = 700.0
    FIDUCIAL = 1500.0

    # Display window for slice renders
    WINDOW = (-300.0, 300.0)
