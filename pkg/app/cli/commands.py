"""
Main command router.
"""

from app.cli.router import CommandRouter
from app.modules.detection.routes import router as detection_router
from app.modules.evaluation.routes import router as evaluation_router
from app.modules.training.routes import router as training_router
from app.modules.vocabulary.routes import router as vocabulary_router

command_router = CommandRouter()

# Include vocabulary module (parse)
command_router.include_router(vocabulary_router)

# Include evaluation module (synth, eval, ablate)
command_router.include_router(evaluation_router)

# Include training module (train)
command_router.include_router(training_router)

# Include detection module (detect)
command_router.include_router(detection_router)
