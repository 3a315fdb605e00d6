# 纤维数据模型、重采样、文件读写与合成数据
