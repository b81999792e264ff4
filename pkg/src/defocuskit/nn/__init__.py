"""From-scratch neural network: layers, the defocus model, and training."""

from .layers import (Conv2D, Dense, Dropout, Flatten, MaxPool2D, ReLU,
                     Sequential, softmax, softmax_cross_entropy)
from .network import DefocusModel, load_model, pad_to, save_model
from .training import (TrainingData, deep_encodings, full_encodings, sgd_step,
                       stack_records, train, train_hand_only, train_stage1,
                       train_stage2, within_tolerance_accuracy)
